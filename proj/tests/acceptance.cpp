// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "memefusion/ablation.hpp"
#include "memefusion/corpus.hpp"
#include "memefusion/ensemble.hpp"
#include "memefusion/fusion.hpp"
#include "memefusion/metrics.hpp"
#include "memefusion/preprocess.hpp"
#include "memefusion/report.hpp"
#include "memefusion/training.hpp"
#include "support/synthetic.hpp"

namespace fs = std::filesystem;
using namespace memefusion;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "memefusion_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// --- 1 ---------------------------------------------------------------------

Outcome metric_oracle() {
  const auto t0 = Clock::now();
  Rng rng(1);
  double worst = 0;
  const int ks[] = {2, 3, 5};
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = ks[trial % 3];
    std::vector<int> preds, labels;
    for (int t = 0; t < K; ++t) {
      for (int p = 0; p < K; ++p) {
        // some cells (and whole columns) left empty to hit the 0/0 cases
        const long n = rng.uniform() < 0.2 ? 0 : static_cast<long>(rng.below(30));
        for (long i = 0; i < n; ++i) {
          labels.push_back(t);
          preds.push_back(p);
        }
      }
    }
    if (preds.empty()) {
      preds.push_back(0);
      labels.push_back(0);
    }
    const auto r = evaluate_predictions(preds, labels, K);

    // from-definition oracle over the raw sample lists
    const double N = static_cast<double>(preds.size());
    double correct = 0;
    double mp = 0, mr = 0, mf = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
    worst = std::max(worst, std::abs(r.accuracy - correct / N));
    for (int c = 0; c < K; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        tp += preds[i] == c && labels[i] == c;
        fp += preds[i] == c && labels[i] != c;
        fn += preds[i] != c && labels[i] == c;
      }
      const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double rc = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double f = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
      worst = std::max({worst, std::abs(r.precision[c] - p), std::abs(r.recall[c] - rc),
                        std::abs(r.f1[c] - f)});
      mp += p / K;
      mr += rc / K;
      mf += f / K;
    }
    worst = std::max({worst, std::abs(r.macro_precision - mp), std::abs(r.macro_recall - mr),
                      std::abs(r.macro_f1 - mf)});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 10.0,
          fmt("max deviation %.3g over 1000 matrices, %.2f s", worst, secs)};
}

// --- 2 ---------------------------------------------------------------------

Outcome accuracy_f1_paradox() {
  const std::vector<long> counts = {674, 326};
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c) labels.insert(labels.end(), counts[c], c);
  const std::vector<int> preds(labels.size(), 0);
  const auto r = evaluate_predictions(preds, labels, 2);
  const bool ok = std::abs(r.accuracy - 0.674) <= 0.001 && std::abs(r.macro_f1 - 0.4025) <= 0.001;
  return {ok, fmt("accuracy %.4f, macro-F1 %.4f (majority F1 %.4f, minority F1 %.4f)",
                  r.accuracy, r.macro_f1, r.f1[0], r.f1[1])};
}

// --- 3 ---------------------------------------------------------------------

Outcome class_weights() {
  const std::vector<long> counts = {207, 100};
  const auto w = compute_class_weights(counts, 0.3);
  const auto flat = compute_class_weights(counts, 0.0);
  const bool ok = std::abs(w.weights[1] - 1.2439) <= 0.001 && w.weights[0] == 1.0 &&
                  flat.weights[0] == 1.0 && flat.weights[1] == 1.0;
  return {ok, fmt("beta=0.3 -> (%.6f, %.4f); beta=0 -> (%.1f, %.1f)", w.weights[0],
                  w.weights[1], flat.weights[0], flat.weights[1])};
}

// --- 4 ---------------------------------------------------------------------

Outcome dimensional_anchor() {
  FusionModel m4(ModelConfigId::of(ModelKind::M4), HybridHeadConfig{}, 1);
  const int dim = m4.classifier_input_dim();
  const double ratio = 854.0 / dim;
  return {dim == 1536 && std::abs(ratio - 0.556) <= 0.001,
          fmt("M4 classifier input %d, 854/%d = %.4f", dim, dim, ratio)};
}

// --- 5 ---------------------------------------------------------------------

// Fourth-order central difference of f at x along one coordinate.
double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  HybridHeadConfig head;
  head.latent_dim = 8;
  head.num_heads = 2;
  head.num_classes = 2;
  head.image_dim = 6;
  head.text_dim = 10;
  head.dropout_rate = 0.3;
  FusionModel model(ModelConfigId::of(ModelKind::M7), head, 11);

  Rng data_rng(5);
  const int B = 4;
  Matrix img(B, head.image_dim), txt(B, head.text_dim);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = data_rng.uniform(-1, 1);
  for (Eigen::Index i = 0; i < txt.size(); ++i) txt.data()[i] = data_rng.uniform(-1, 1);
  const std::vector<int> targets = {0, 1, 1, 0};
  const std::vector<long> counts = {207, 100};
  const auto weights = compute_class_weights(counts, 0.3);

  auto loss_of = [&](FusionModel& m, bool with_grad) {
    Rng drop(77);  // identical dropout mask on every evaluation
    auto pass = m.forward(&img, &txt, true, &drop);
    Matrix dlogits;
    const double loss =
        smoothed_weighted_ce(pass.logits, targets, weights, 0.1, with_grad ? &dlogits : nullptr);
    if (with_grad) {
      zero_grads(m.parameters());
      m.backward(pass, dlogits);
    }
    return loss;
  };

  loss_of(model, true);
  double worst_head = 0;
  long checked = 0;
  const double h = 1e-4;
  auto params = model.parameters();
  for (Param* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& slot = p->value.data()[i];
      const double orig = slot;
      const double numeric = central_diff(
          [&](double v) {
            slot = v;
            return loss_of(model, false);
          },
          orig, h);
      slot = orig;
      worst_head = std::max(worst_head, rel_error(p->grad.data()[i], numeric));
      ++checked;
    }
  }

  // loss alone, with respect to the logits
  double worst_loss = 0;
  Rng lr(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(lr.below(3));
    Vector z(K);
    for (int c = 0; c < K; ++c) z[c] = lr.uniform(-4, 4);
    std::vector<long> cc(K);
    for (auto& c : cc) c = 1 + static_cast<long>(lr.below(500));
    const auto w = compute_class_weights(cc, 0.3);
    const int t = static_cast<int>(lr.below(K));
    Vector g;
    smoothed_weighted_ce(z, t, w, 0.1, &g);
    for (int c = 0; c < K; ++c) {
      const double numeric = central_diff(
          [&](double v) {
            Vector a = z;
            a[c] = v;
            return smoothed_weighted_ce(a, t, w, 0.1);
          },
          z[c], h);
      worst_loss = std::max(worst_loss, rel_error(g[c], numeric));
    }
  }
  const double secs = seconds_since(t0);
  return {worst_head < 1e-4 && worst_loss < 1e-6 && secs < 30.0,
          fmt("head: %ld params, max rel err %.3g; loss: max rel err %.3g; %.2f s", checked,
              worst_head, worst_loss, secs)};
}

// --- 6 ---------------------------------------------------------------------

Outcome gate_simplex() {
  FusionModel model(ModelConfigId::of(ModelKind::M7), HybridHeadConfig{}, 3);
  Rng rng(8);
  double worst_sum = 0;
  bool in_range = true;
  // batched random latents through the trained-shape gate
  const int d = model.head_config().latent_dim;
  for (int batch = 0; batch < 10; ++batch) {
    Matrix a(1000, d), b(1000, d);
    const double scale = 0.1 * std::pow(10.0, batch % 4);  // up to saturating logits
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = scale * rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = scale * rng.uniform(-1, 1);
    const auto [fused, gates] = model.gate().forward(a, b, nullptr);
    for (Eigen::Index r = 0; r < gates.rows(); ++r) {
      const double g0 = gates(r, 0), g1 = gates(r, 1);
      in_range = in_range && g0 >= 0 && g0 <= 1 && g1 >= 0 && g1 <= 1;
      worst_sum = std::max(worst_sum, std::abs(g0 + g1 - 1));
    }
  }
  return {in_range && worst_sum <= 1e-6,
          fmt("10000 inputs, components in [0,1]: %s, max |sum-1| %.3g",
              in_range ? "yes" : "no", worst_sum)};
}

// --- 7 ---------------------------------------------------------------------

Outcome split_determinism() {
  const auto m = testing::labeled_manifest({720, 348});
  const auto a = stratified_kfold(m, 5, 42);
  const auto b = stratified_kfold(m, 5, 42);
  save_folds(a, work_dir() / "folds_a.json");
  save_folds(b, work_dir() / "folds_b.json");
  const bool same_bytes = slurp(work_dir() / "folds_a.json") == slurp(work_dir() / "folds_b.json");

  auto sizes = a.fold_sizes();
  std::vector<long> sorted(sizes.begin(), sizes.end());
  std::sort(sorted.begin(), sorted.end());
  const bool sizes_ok = sorted == std::vector<long>{213, 213, 214, 214, 214};

  bool strat_ok = true;
  std::vector<std::vector<long>> per_fold(5, std::vector<long>(2, 0));
  for (const auto& s : m.samples) per_fold[a.fold_of(s.id)][*s.label_a]++;
  std::string counts;
  for (int f = 0; f < 5; ++f) {
    for (int c = 0; c < 2; ++c) {
      const double expected = (c == 0 ? 720.0 : 348.0) / 5.0;
      strat_ok = strat_ok && std::abs(per_fold[f][c] - expected) <= 1.0;
    }
    counts += fmt("%s%ld/%ld", f ? " " : "", per_fold[f][0], per_fold[f][1]);
  }
  return {same_bytes && sizes_ok && strat_ok,
          fmt("sizes %zu %zu %zu %zu %zu; per-fold counts %s; identical files: %s", sizes[0],
              sizes[1], sizes[2], sizes[3], sizes[4], counts.c_str(), same_bytes ? "yes" : "no")};
}

// --- 8 ---------------------------------------------------------------------

Outcome scheduler_contracts() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  // one improving epoch, then a 6-epoch plateau
  auto sched = scheduler_init(cfg);
  sched = scheduler_step(sched, 0.60, cfg);
  for (int i = 0; i < 6; ++i) sched = scheduler_step(sched, 0.60, cfg);
  const bool halved_once = sched.reductions == 1 && sched.current_lr == 0.5 * cfg.learning_rate;

  // 10 plateau epochs keep going, the 11th stops
  StopState stop;
  stop = early_stop_step(stop, 0.60, cfg);
  bool early = false;
  for (int i = 0; i < 10; ++i) {
    stop = early_stop_step(stop, 0.60, cfg);
    early = early || stop.stop_flag;
  }
  const bool before = !early;
  stop = early_stop_step(stop, 0.60, cfg);
  return {halved_once && before && stop.stop_flag,
          fmt("6-epoch plateau: %d reduction(s), lr %.2e; stop after 10 plateau epochs: %s, "
              "after 11: %s",
              sched.reductions, sched.current_lr, before ? "no" : "yes",
              stop.stop_flag ? "yes" : "no")};
}

// --- 9 ---------------------------------------------------------------------

Outcome bootstrap_statistic() {
  double sum = 0;
  for (int r = 0; r < 100; ++r) sum += unique_fraction(bootstrap_indices(854, 1000 + r), 854);
  const double mean = sum / 100;
  return {std::abs(mean - 0.632) <= 0.01, fmt("mean unique fraction %.4f", mean)};
}

// --- 10 and 12 -------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MEMEFUSION_CLI + "\" " + args + " > \"" +
                          (work_dir() / "cli.log").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct AblationRun {
  bool ok = false;
  double seconds = 0;
  std::string error;
};

AblationRun& e2e_setup() {
  static AblationRun state = [] {
    AblationRun s;
    const fs::path dir = work_dir() / "mixed";
    const auto manifest = testing::write_mixed_modality_corpus(dir / "data");
    {
      std::ofstream cfg(dir / "config.json");
      cfg << "{\"learning_rate\": 0.001, \"max_epochs\": 60}\n";
    }
    const std::string g = "--toy-encoders --task A --seed 42 --config \"" +
                          (dir / "config.json").string() + "\" ";
    const std::string common = "--manifest \"" + manifest.string() + "\" ";
    const std::string cache = "--cache \"" + (dir / "cache.bin").string() + "\" ";
    const std::string folds = "--folds \"" + (dir / "folds.json").string() + "\" ";
    if (run_cli(g + "split " + common + "--folds 2 --out \"" + (dir / "folds.json").string() + "\"") != 0 ||
        run_cli(g + "encode " + common + cache) != 0) {
      s.error = "split/encode failed: " + slurp(work_dir() / "cli.log");
      return s;
    }
    const auto t0 = Clock::now();
    const int rc = run_cli(g + "ablate " + common + cache + folds + "--models M1,M2,M4,M7 --out \"" +
                           (dir / "run1").string() + "\"");
    s.seconds = seconds_since(t0);
    if (rc != 0) {
      s.error = "ablate exited " + std::to_string(rc) + ": " + slurp(work_dir() / "cli.log");
      return s;
    }
    if (run_cli(g + "ablate " + common + cache + folds + "--models M1,M2,M4,M7 --out \"" +
                (dir / "run2").string() + "\"") != 0) {
      s.error = "second ablate failed";
      return s;
    }
    s.ok = true;
    return s;
  }();
  return state;
}

Outcome constructed_separability() {
  auto& run = e2e_setup();
  if (!run.ok) return {false, run.error};
  const auto table = ablation_from_json(slurp(work_dir() / "mixed" / "run1" / "ablation.json"));
  double f1[9] = {};
  int rank[9] = {};
  for (const auto& r : table.rows) {
    f1[static_cast<int>(r.model)] = r.aggregate.mean.macro_f1;
    rank[static_cast<int>(r.model)] = r.rank;
  }
  const bool ok = run.seconds < 300 && f1[7] >= 0.90 && f1[1] <= 0.80 && f1[2] <= 0.80;
  return {ok, fmt("macro-F1 M7 %.4f (rank %d), M1 %.4f, M2 %.4f, M4 %.4f (rank %d); %.1f s",
                  f1[7], rank[7], f1[1], f1[2], f1[4], rank[4], run.seconds)};
}

Outcome report_surface() {
  auto& run = e2e_setup();
  if (!run.ok) return {false, run.error};
  const fs::path a = work_dir() / "mixed" / "run1";
  const fs::path b = work_dir() / "mixed" / "run2";
  const std::string csv = slurp(a / "ablation.csv");
  const std::string header = csv.substr(0, csv.find('\n'));
  const bool header_ok = header == "rank,model,f1_macro,accuracy,precision,recall";
  const std::string md = slurp(a / "ablation.md");
  const bool md_ok =
      md.rfind("| Rank | Model Configuration | F1 Macro | Accuracy | Precision | Recall |", 0) == 0;
  const std::string svg = slurp(a / "ablation.svg");
  const bool svg_ok = svg.find("<svg") != std::string::npos && svg.find("<rect") != std::string::npos;
  const bool same = csv == slurp(b / "ablation.csv") && svg == slurp(b / "ablation.svg");
  const long rows = std::count(csv.begin(), csv.end(), '\n') - 1;
  return {header_ok && md_ok && svg_ok && same && rows == 4,
          fmt("csv header ok: %s, markdown header ok: %s, figure: %s, %ld ranked rows, rerun "
              "byte-identical: %s",
              header_ok ? "yes" : "no", md_ok ? "yes" : "no", svg_ok ? "yes" : "no", rows,
              same ? "yes" : "no")};
}

// --- 11 --------------------------------------------------------------------

Outcome text_removal_contract() {
  Rng rng(4);
  Raster img = testing::noise_image(120, rng, 0, 255);
  img = Raster(img);  // square noise; make it non-square below
  Raster wide(160, 90, 3);
  for (auto& v : wide.data) v = static_cast<std::uint8_t>(rng.below(256));
  const TextBox box{40, 20, 50, 30, 0.9};
  TextRemovalOptions opts;
  const auto out = remove_text_regions(wide, {box}, opts);
  const int x0 = box.x - opts.dilation, y0 = box.y - opts.dilation;
  const int x1 = box.x + box.w + opts.dilation, y1 = box.y + box.h + opts.dilation;
  long outside_diff = 0, inside_changed = 0;
  for (int y = 0; y < wide.height; ++y) {
    for (int x = 0; x < wide.width; ++x) {
      const bool inside = x >= x0 && x < x1 && y >= y0 && y < y1;
      for (int c = 0; c < 3; ++c) {
        const bool diff = out.at(x, y, c) != wide.at(x, y, c);
        if (inside) inside_changed += diff; else outside_diff += diff;
      }
    }
  }
  const bool dims = out.width == wide.width && out.height == wide.height &&
                    out.channels == wide.channels;
  return {dims && outside_diff == 0 && inside_changed > 0,
          fmt("dims %dx%dx%d, %ld out-of-box values changed, %ld in-box values blurred",
              out.width, out.height, out.channels, outside_diff, inside_changed)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"AC1  metric oracle", metric_oracle},
      {"AC2  accuracy/F1 paradox", accuracy_f1_paradox},
      {"AC3  class weights", class_weights},
      {"AC4  M4 dimensional anchor", dimensional_anchor},
      {"AC5  gradient check", gradient_check},
      {"AC6  gate simplex", gate_simplex},
      {"AC7  split determinism", split_determinism},
      {"AC8  scheduler/stopping", scheduler_contracts},
      {"AC9  bootstrap statistic", bootstrap_statistic},
      {"AC10 constructed-separability ablation", constructed_separability},
      {"AC11 text-removal contract", text_removal_contract},
      {"AC12 report surface", report_surface},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures;
}
