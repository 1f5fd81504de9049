#include "stnet_cli/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "stnet/analysis.hpp"
#include "stnet/checkpoint.hpp"
#include "stnet/dataset.hpp"
#include "stnet/ensemble.hpp"
#include "stnet/errors.hpp"
#include "stnet/models.hpp"
#include "stnet/parallel.hpp"
#include "stnet/synthetic.hpp"
#include "stnet/training.hpp"
#include "stnet/verification.hpp"

namespace stnet::cli {

namespace {

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!text.empty() && text.back() == ',') out.emplace_back();
  return out;
}

template <typename N>
N parse_number(const std::string& s, const std::string& flag) {
  N v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw UsageError(flag + ": '" + s + "' is not a valid number");
  return v;
}

template <typename N>
std::vector<N> parse_list(const std::string& text, const std::string& flag, std::size_t expected = 0) {
  std::vector<N> out;
  for (const auto& item : split_commas(text)) out.push_back(parse_number<N>(item, flag));
  if (expected && out.size() != expected)
    throw UsageError(flag + " expects " + std::to_string(expected) + " comma-separated values");
  if (out.empty()) throw UsageError(flag + " expects at least one value");
  return out;
}

Extent3 parse_extent(const std::string& text, const std::string& flag) {
  const auto v = parse_list<std::size_t>(text, flag, 3);
  if (std::ranges::count(v, 0u)) throw UsageError(flag + " extents must be >= 1");
  return {v[0], v[1], v[2]};
}

// Input sizes that the data fixes for the non-video architectures.
template <typename T>
ArchOptions options_from_sample(std::string_view arch, const Sample<T>& sample) {
  ArchOptions opt;
  switch (pipeline_for_arch(arch)) {
    case InputPipeline::Video: break;
    case InputPipeline::AudioPooled: opt.audio_features = sample.input.dim(0) / 2; break;
    case InputPipeline::AudioFixed:
    case InputPipeline::AudioVariable: opt.audio_features = sample.input.dim(1); break;
    case InputPipeline::FrameFeatures: opt.feature_dim = sample.input.dim(1); break;
  }
  return opt;
}

void print_metrics(std::ostream& out, const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "accuracy=%.6f precision=%.6f recall=%.6f tp=%zu fp=%zu tn=%zu fn=%zu", m.accuracy,
                m.precision, m.recall, m.tp, m.fp, m.tn, m.fn);
  out << buf << '\n';
}

struct GenArgs {
  std::string kind, out;
  std::size_t train = 200, val = 60, test = 60;
  std::uint64_t seed = 0;
  std::string shape = "16,64,64";
  double imbalance = 1.0;
  std::size_t feat_dim = 16;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  const SplitCounts counts{a.train, a.val, a.test};
  std::vector<ManifestRecord> records;
  if (a.kind == "video") {
    SyntheticVideoConfig cfg;
    cfg.counts = counts;
    cfg.shape = parse_extent(a.shape, "--shape");
    cfg.imbalance = a.imbalance;
    cfg.seed = a.seed;
    records = gen_synthetic_videos(a.out, cfg);
  } else if (a.kind == "audio") {
    SyntheticAudioConfig cfg;
    cfg.counts = counts;
    cfg.features = a.feat_dim;
    cfg.imbalance = a.imbalance;
    cfg.seed = a.seed;
    records = gen_synthetic_audio(a.out, cfg);
  } else {
    throw UsageError("--kind must be video or audio");
  }
  out << "wrote " << records.size() << " samples to " << a.out << '\n';
  return kExitOk;
}

struct CountArgs {
  std::string arch, channels, flops;
  bool json = false;
};

int cmd_count(const CountArgs& a, std::ostream& out) {
  if (!is_video_arch(a.arch)) throw UsageError("count-params supports the video architectures only");
  ChannelLadder ladder = kDefaultLadder;
  if (!a.channels.empty()) {
    const auto c = parse_list<std::size_t>(a.channels, "--channels", 5);
    if (std::ranges::count(c, 0u)) throw UsageError("--channels entries must be >= 1");
    std::copy(c.begin(), c.end(), ladder.begin());
  }
  const NetworkArch arch = video_arch(a.arch, ladder);
  ParamReport rep = count_params(arch);
  if (!a.flops.empty()) rep.flops = count_flops(arch, parse_extent(a.flops, "--flops"));
  if (a.json) {
    out << report_json(rep) << '\n';
  } else {
    out << rep.name << ": " << rep.total_weights << " conv weights, " << rep.total_biases << " biases, decrease factor "
        << round1(rep.decrease_factor) << '\n';
    for (std::size_t i = 0; i < rep.per_block.size(); ++i) {
      const auto& b = rep.per_block[i];
      out << "  block" << i + 1 << " " << block_kind_name(b.kind) << " " << b.cin << "->" << b.cout << ": "
          << b.weights << " weights\n";
    }
    if (rep.flops) out << "  MACs per sample: " << *rep.flops << '\n';
  }
  return kExitOk;
}

struct TrainArgs {
  std::string arch, data, checkpoint, history;
  std::size_t epochs = 1, batch_size = 2;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto pipeline = pipeline_for_arch(a.arch);
  const auto train = load_split<Real>(a.data, Split::Train, pipeline);
  const auto val = load_split<Real>(a.data, Split::Val, pipeline);
  if (train.empty() || val.empty()) throw DataError("data directory needs nonempty train and val splits");
  Rng rng(a.seed);
  auto model = build_arch<Real>(a.arch, rng, options_from_sample(a.arch, train.front()));

  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.checkpoint = std::filesystem::path(a.checkpoint);
  cfg.record_initial = true;
  cfg.on_epoch = [&](const EpochRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %zu train_loss=%.6f train_acc=%.4f val_acc=%.4f", r.epoch, r.train_loss,
                  r.train_acc, r.val_acc);
    out << buf << std::endl;
  };
  const TrainResult result = train_loop(*model, train, val, cfg);
  if (!a.history.empty()) write_history_csv(a.history, result.history);
  if (!result.error.empty()) {
    err << "error: " << result.error << '\n';
    return kExitRuntime;
  }
  out << "best epoch " << result.best_epoch << " val_acc=" << result.best_val_acc << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string arch, checkpoint, data, split = "test", preds;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto samples = load_split<Real>(a.data, parse_split(a.split), pipeline_for_arch(a.arch));
  if (samples.empty()) throw DataError("split '" + a.split + "' is empty");
  Rng rng(0);
  auto model = build_arch<Real>(a.arch, rng, options_from_sample(a.arch, samples.front()));
  load_checkpoint(a.checkpoint, *model);
  const auto result = evaluate(*model, samples);
  PredictionSet preds;
  preds.model_id = a.arch;
  for (const auto& s : samples) preds.ids.push_back(s.id);
  preds.probs = result.p_positive;
  write_predictions(a.preds, preds);
  print_metrics(out, result.metrics);
  return kExitOk;
}

struct FuseArgs {
  std::string preds, weights, val_acc, out, labels;
};

int cmd_fuse(const FuseArgs& a, std::ostream& out) {
  const auto files = split_commas(a.preds);
  if (files.size() < 2) throw UsageError("--preds needs at least two prediction files");
  if (a.weights.empty() == a.val_acc.empty()) throw UsageError("give exactly one of --weights or --val-acc");
  std::vector<PredictionSet> sets;
  for (const auto& f : files) sets.push_back(read_predictions(f));

  EnsembleSpec spec;
  if (a.weights == "equal") {
    spec.strategy = EnsembleStrategy::Average;
    spec.weights = derive_weights(EnsembleStrategy::Average, std::vector<double>(sets.size(), 1.0));
  } else if (!a.weights.empty()) {
    const auto w = parse_list<double>(a.weights, "--weights");
    if (w.size() != sets.size())
      throw UsageError("--weights has " + std::to_string(w.size()) + " values for " + std::to_string(sets.size()) +
                       " prediction files");
    spec.weights = normalize_weights(w);
  } else {
    const auto acc = parse_list<double>(a.val_acc, "--val-acc");
    if (acc.size() != sets.size())
      throw UsageError("--val-acc has " + std::to_string(acc.size()) + " values for " + std::to_string(sets.size()) +
                       " prediction files");
    spec.strategy = EnsembleStrategy::ValidationAccuracy;
    spec.weights = derive_weights(EnsembleStrategy::ValidationAccuracy, acc);
  }
  const PredictionSet fused = fuse(sets, spec);
  write_predictions(a.out, fused);
  out << "fused " << fused.ids.size() << " samples from " << sets.size() << " models\n";

  if (!a.labels.empty()) {
    std::map<std::string, int> by_id;
    for (const auto& r : read_manifest(a.labels, false)) by_id[r.id] = r.label;
    std::vector<int> labels;
    for (const auto& id : fused.ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("sample '" + id + "' is not in " + a.labels);
      labels.push_back(it->second);
    }
    print_metrics(out, compute_metrics(fused.probs, labels));
  }
  return kExitOk;
}

struct GradArgs {
  std::string target, name;
  std::uint64_t seed = 0;
  double eps = 1e-5;
  std::optional<double> tol;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  GradcheckOptions opt;
  opt.eps = a.eps;
  const GradTarget target = parse_grad_target(a.target);
  opt.tol = a.tol.value_or(target == GradTarget::Model ? kGradTolModel : kGradTol);
  const OracleReport r = gradcheck(target, a.name, a.seed, opt);
  out << r.json() << '\n';
  return r.passed ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal network toolkit"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-synth", "Generate a seeded synthetic dataset");
  g->add_option("--kind", gen.kind, "video or audio")->required()->check(CLI::IsMember({"video", "audio"}));
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--train", gen.train)->required();
  g->add_option("--val", gen.val)->required();
  g->add_option("--test", gen.test)->required();
  g->add_option("--seed", gen.seed)->required();
  g->add_option("--shape", gen.shape, "L,H,W for videos")->capture_default_str();
  g->add_option("--imbalance", gen.imbalance, "intoxicated:sober ratio in train")->capture_default_str();
  g->add_option("--feat-dim", gen.feat_dim, "Audio feature columns")->capture_default_str();

  CountArgs count;
  auto* c = app.add_subcommand("count-params", "Parameter and MAC counts of a video architecture");
  c->add_option("--arch", count.arch)->required();
  c->add_option("--channels", count.channels, "c0,c1,c2,c3,c4");
  c->add_option("--flops", count.flops, "Input L,H,W for the MAC count");
  c->add_flag("--json", count.json);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train with best-validation checkpointing");
  t->add_option("--arch", train.arch)->required();
  t->add_option("--data", train.data)->required();
  t->add_option("--epochs", train.epochs)->required()->check(CLI::PositiveNumber);
  t->add_option("--lr", train.lr)->capture_default_str();
  t->add_option("--batch-size", train.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--seed", train.seed)->required();
  t->add_option("--checkpoint", train.checkpoint)->required();
  t->add_option("--history", train.history, "Per-epoch CSV");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint and write predictions");
  e->add_option("--arch", ev.arch)->required();
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data)->required();
  e->add_option("--split", ev.split)->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  e->add_option("--preds", ev.preds)->required();

  FuseArgs fu;
  auto* f = app.add_subcommand("fuse", "Late fusion of prediction files");
  f->add_option("--preds", fu.preds, "A.csv,B.csv[,C.csv]")->required();
  f->add_option("--weights", fu.weights, "equal or w1,w2[,w3]");
  f->add_option("--val-acc", fu.val_acc, "a1,a2[,a3]");
  f->add_option("--out", fu.out)->required();
  f->add_option("--labels", fu.labels, "Manifest for metrics");

  GradArgs gr;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check in 64-bit");
  gc->add_option("--target", gr.target)->required()->check(CLI::IsMember({"layer", "block", "model"}));
  gc->add_option("--name", gr.name)->required();
  gc->add_option("--seed", gr.seed)->required();
  gc->add_option("--eps", gr.eps)->capture_default_str();
  gc->add_option("--tol", gr.tol, "Default 1e-6, or 1e-5 for models");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }

  try {
    set_max_threads(threads);
    if (g->parsed()) return cmd_gen(gen, out);
    if (c->parsed()) return cmd_count(count, out);
    if (t->parsed()) return cmd_train(train, out, err);
    if (e->parsed()) return cmd_eval(ev, out);
    if (f->parsed()) return cmd_fuse(fu, out);
    if (gc->parsed()) return cmd_gradcheck(gr, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace stnet::cli
