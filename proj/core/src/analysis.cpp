#include "stnet/analysis.hpp"

#include <cmath>
#include "json.hpp"

#include "stnet/errors.hpp"

namespace stnet {

std::uint64_t block_weight_count(BlockKind kind, std::uint64_t cin, std::uint64_t cout, std::uint64_t k) {
  switch (kind) {
    case BlockKind::Fully3D:
    case BlockKind::Block1:
      return k * k * k * cin * cout;
    case BlockKind::Block2:
    case BlockKind::Block2Plus:
      return k * k * cin * cout + k * cout * cout;
    case BlockKind::Block3:
      return 3 * k * cin * cout;
  }
  return 0;
}

std::uint64_t block_bias_count(BlockKind kind, std::uint64_t cout) {
  switch (kind) {
    case BlockKind::Fully3D: return cout;
    case BlockKind::Block1: return 3 * cout;
    case BlockKind::Block2:
    case BlockKind::Block2Plus: return 2 * cout;
    case BlockKind::Block3: return 3 * cout;
  }
  return 0;
}

namespace {

ParamReport closed_form(const NetworkArch& arch) {
  ParamReport r;
  r.name = arch.name;
  for (const auto& b : arch.blocks) {
    const auto w = block_weight_count(b.kind, b.cin, b.cout);
    const auto bias = block_bias_count(b.kind, b.cout);
    r.per_block.push_back({b.kind, b.cin, b.cout, w, bias});
    r.total_weights += w;
    r.total_biases += bias;
  }
  return r;
}

}  // namespace

ParamReport count_params(const NetworkArch& arch) {
  ParamReport r = closed_form(arch);
  r.decrease_factor = decrease_factor(r, closed_form(video_arch("fully3d", arch.channels)));
  return r;
}

double decrease_factor(const ParamReport& report, const ParamReport& baseline) {
  if (report.total_weights == 0) throw ArithmeticError("decrease factor: report has zero parameters");
  return static_cast<double>(baseline.total_weights) / static_cast<double>(report.total_weights);
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

std::vector<std::uint64_t> conv_layer_flops(const NetworkArch& arch, const Extent3& input) {
  std::vector<std::uint64_t> out;
  Extent3 x = input;
  for (const auto& spec : arch.blocks) {
    std::optional<Extent3> fused;
    for (const auto& branch : block_layout(spec)) {
      Extent3 h = x;
      for (const auto& c : branch.convs) {
        h = c.output_extent(h);
        out.push_back(static_cast<std::uint64_t>(h.volume()) * c.cout * c.kernel.volume() * c.cin);
      }
      fused = h;
    }
    x = spec.pool.output_extent(*fused);
  }
  return out;
}

std::uint64_t count_flops(const NetworkArch& arch, const Extent3& input) {
  std::uint64_t total = 0;
  for (auto f : conv_layer_flops(arch, input)) total += f;
  return total;
}

std::string report_json(const ParamReport& report) {
  nlohmann::ordered_json j;
  j["name"] = report.name;
  auto blocks = nlohmann::ordered_json::array();
  for (const auto& b : report.per_block)
    blocks.push_back({{"kind", std::string(block_kind_name(b.kind))},
                      {"cin", b.cin},
                      {"cout", b.cout},
                      {"weights", b.weights},
                      {"biases", b.biases}});
  j["per_block"] = blocks;
  j["total_weights"] = report.total_weights;
  j["total_biases"] = report.total_biases;
  j["decrease_factor"] = report.decrease_factor;
  if (report.flops) j["flops"] = *report.flops;
  return j.dump();
}

}  // namespace stnet
