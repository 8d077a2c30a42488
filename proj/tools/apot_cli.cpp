#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "apot/analysis.hpp"
#include "apot/cost.hpp"
#include "apot/dataset.hpp"
#include "apot/errors.hpp"
#include "apot/levels.hpp"
#include "apot/quantizer.hpp"
#include "apot/rcf.hpp"
#include "apot/shiftadd.hpp"
#include "apot/tensor_io.hpp"
#include "apot/train.hpp"
#include "apot/wnorm.hpp"

using json = nlohmann::ordered_json;
using namespace apot;

namespace {

constexpr const char* kToolVersion = "0.1.0";

enum Exit : int { kOk = 0, kInternal = 1, kUsage = 2, kConfig = 3, kInput = 4, kIo = 5, kArithmetic = 6 };

const char* kExitHelp =
    "Exit codes: 0 ok, 1 internal error, 2 usage (bad flags), 3 configuration error,\n"
    "4 invalid input data, 5 file I/O failure, 6 arithmetic overflow or diverged training.\n"
    "Environment: APOT_SEED supplies --seed when the flag is absent.";

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

// Everything a subcommand produced, for the manifest.
struct Run {
  std::vector<std::string> argv;
  std::string command;
  std::uint64_t seed = 0;
  json outputs = json::array();
  std::string manifest_path;
  std::string primary;  // --out of the subcommand, if any

  void record(const std::string& path, const std::string& bytes) {
    outputs.push_back({{"path", path}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  // `path` empty means stdout.
  void emit(const std::string& path, const std::string& text) {
    if (path.empty()) {
      std::cout << text;
      std::cout.flush();
      record("-", text);
    } else {
      write_file(path, text);
      record(path, text);
    }
  }
  void record_file(const std::string& path) { record(path, read_file(path)); }
};

enum class Format { Csv, Json };

struct Common {
  std::string format = "csv";
  std::string out;
  std::uint64_t seed = 0;
  Format fmt() const { return format == "json" ? Format::Json : Format::Csv; }
};

void add_common(CLI::App* sub, Common& c, bool with_seed) {
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  sub->add_option("--out", c.out, "Output path (stdout when omitted)");
  if (with_seed) sub->add_option("--seed", c.seed, "RNG seed (falls back to APOT_SEED)")->capture_default_str();
}

// ---- levels -------------------------------------------------------------

struct LevelsArgs {
  Common c;
  std::string scheme = "apot";
  int bits = 4;
  int base = 2;
  double alpha = 1.0;
  bool is_signed = false;
};

std::string term_string(std::span<const PotTerm> terms) {
  if (terms.empty()) return "0";
  std::string s;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i > 0 || terms[i].sign < 0) s += terms[i].sign < 0 ? "-" : "+";
    s += "2^" + std::to_string(terms[i].exponent);
  }
  return s;
}

void run_levels(const LevelsArgs& a, Run& run) {
  const SchemeKind kind = parse_scheme_kind(a.scheme);
  const int k = kind == SchemeKind::PoT ? (a.is_signed ? a.bits - 1 : a.bits) : a.base;
  const LevelSet ls = build_levels(kind, a.alpha, a.bits, kind == SchemeKind::Uniform ? 1 : k, a.is_signed);
  std::ostringstream os;
  if (a.c.fmt() == Format::Csv) {
    os << "index,value,terms\n";
    for (std::size_t i = 0; i < ls.size(); ++i) os << i << ',' << num(ls.level(i)) << ',' << term_string(ls.terms(i)) << '\n';
  } else {
    json rows = json::array();
    for (std::size_t i = 0; i < ls.size(); ++i) {
      rows.push_back({{"index", i}, {"value", ls.level(i)}, {"psum", ls.psum(i)}, {"terms", term_string(ls.terms(i))}});
    }
    json j{{"scheme", to_string(kind)}, {"bits", a.bits},          {"base", a.base},
           {"signed", a.is_signed},     {"alpha", a.alpha},        {"gamma", ls.gamma()},
           {"count", ls.size()},        {"max_terms", ls.max_terms()}, {"levels", rows}};
    os << j.dump(2) << '\n';
  }
  run.emit(a.c.out, os.str());
}

// ---- quantize -----------------------------------------------------------

struct QuantizeArgs {
  std::string in;
  std::string out;
  std::string summary;
  std::string format = "json";
  std::string scheme = "apot";
  int bits = 4;
  int base = 2;
  double alpha = 3.0;
  bool activations = false;
  bool weights = false;
  bool no_wn = false;
};

void run_quantize(const QuantizeArgs& a, Run& run) {
  QuantConfig cfg;
  cfg.scheme = parse_scheme_kind(a.scheme);
  cfg.base_bits = a.base;
  cfg.normalize_weights = !a.no_wn;
  if (a.activations) {
    cfg.act_bits = a.bits;
    cfg.alpha_x = a.alpha;
  } else {
    cfg.weight_bits = a.bits;
    cfg.alpha_w = a.alpha;
  }
  cfg.validate();
  const auto x = read_tensor_f32(a.in);
  std::vector<double> q;
  std::size_t clipped = 0;
  if (a.activations) {
    auto r = quantize_activations(x, cfg);
    q = std::move(r.x_hat);
    for (double v : x) clipped += v > cfg.alpha_x ? 1 : 0;
  } else {
    auto r = quantize_weights(x, cfg);
    q = std::move(r.w_hat);
    clipped = r.cache.rcf.clipped_count();
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mse += (q[i] - x[i]) * (q[i] - x[i]);
  mse /= static_cast<double>(x.size());

  write_tensor_f32(a.out, q);
  run.record_file(a.out);
  std::ostringstream os;
  if (a.format == "json") {
    os << json{{"elements", x.size()}, {"clipped", clipped}, {"mse", mse}, {"mode", a.activations ? "activations" : "weights"}}
              .dump(2)
       << '\n';
  } else {
    os << "elements,clipped,mse\n" << x.size() << ',' << clipped << ',' << num(mse) << '\n';
  }
  run.emit(a.summary, os.str());
}

// ---- gradcheck ----------------------------------------------------------

struct GradcheckArgs {
  Common c;
  std::string scheme = "apot";
  int bits = 5;
  int base = 2;
  double alpha = 1.0;
  std::size_t samples = 1000;
};

void run_gradcheck(const GradcheckArgs& a, Run& run) {
  QuantConfig cfg;
  cfg.scheme = parse_scheme_kind(a.scheme);
  cfg.weight_bits = a.bits;
  cfg.base_bits = a.base;
  cfg.alpha_w = a.alpha;
  cfg.validate();
  if (a.samples == 0) throw ConfigError("--samples must be positive");
  const LevelSet unit = weight_unit_levels(cfg);
  std::mt19937_64 rng(a.c.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> mag(1.01, 4.0);

  double outlier = 0.0;
  for (std::size_t t = 0; t < a.samples; ++t) {
    const std::vector<double> x{(t % 2 ? 1.0 : -1.0) * a.alpha * mag(rng)};
    const double h = 1e-6 * a.alpha;
    const double fd = (rcf_forward(x, a.alpha + h, unit)[0] - rcf_forward(x, a.alpha - h, unit)[0]) / (2 * h);
    outlier = std::max(outlier, std::abs(fd - rcf_grad_alpha(x, a.alpha, unit).d_alpha[0]));
  }

  // WN backward and the clip-surrogate weight path, 64-element instances.
  auto fd_rel = [&](auto&& f, auto&& analytic, std::vector<double> w) {
    const auto an = analytic(w);
    double worst = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double keep = w[j];
      w[j] = keep + 1e-6;
      const double plus = f(w);
      w[j] = keep - 1e-6;
      const double minus = f(w);
      w[j] = keep;
      worst = std::max(worst, std::abs((plus - minus) / 2e-6 - an[j]));
      scale = std::max(scale, std::abs(an[j]));
    }
    return scale > 0 ? worst / scale : worst;
  };
  double wn = 0.0, surrogate = 0.0;
  const std::size_t instances = std::max<std::size_t>(1, std::min<std::size_t>(a.samples / 10, 100));
  QuantConfig clip_only = cfg;
  clip_only.project_levels = false;
  for (std::size_t t = 0; t < instances; ++t) {
    std::vector<double> w(64), up(64);
    for (double& v : w) v = g(rng);
    for (double& v : up) v = g(rng);
    auto dot = [&](const std::vector<double>& v) { return std::inner_product(v.begin(), v.end(), up.begin(), 0.0); };
    wn = std::max(wn, fd_rel([&](const std::vector<double>& x) { return dot(normalize(x).values); },
                             [&](const std::vector<double>& x) { return normalize_backward(x, up); }, w));
    surrogate = std::max(
        surrogate, fd_rel([&](const std::vector<double>& x) { return dot(quantize_weights(x, clip_only).w_hat); },
                          [&](const std::vector<double>& x) {
                            return backward_weights(quantize_weights(x, clip_only).cache, up).g_w;
                          },
                          w));
  }
  std::ostringstream os;
  if (a.c.fmt() == Format::Json) {
    os << json{{"alpha_outlier_branch", outlier}, {"wnorm_backward", wn}, {"weight_clip_surrogate", surrogate},
               {"samples", a.samples}, {"instances", instances}}
              .dump(2)
       << '\n';
  } else {
    os << "branch,max_error\nalpha_outlier_branch," << num(outlier) << "\nwnorm_backward," << num(wn)
       << "\nweight_clip_surrogate," << num(surrogate) << '\n';
  }
  run.emit(a.c.out, os.str());
}

// ---- analyze ------------------------------------------------------------

struct AnalyzeArgs {
  Common c;
  std::string in;
  std::string scheme = "apot";
  int bits = 4;
  int base = 2;
  std::size_t points = 512;
  bool qem = false, lloyd = false, clipcurve = false;
  bool normalize_first = false;
};

void run_analyze(const AnalyzeArgs& a, Run& run) {
  if (a.qem + a.lloyd + a.clipcurve != 1) throw ConfigError("choose exactly one of --qem, --lloyd, --clipcurve");
  if (a.points < 2) throw ConfigError("--points must be at least 2");
  QuantConfig cfg;
  cfg.scheme = parse_scheme_kind(a.scheme);
  cfg.weight_bits = a.bits;
  cfg.base_bits = a.base;
  cfg.validate();
  auto w = read_tensor_f32(a.in);
  if (a.normalize_first) w = normalize(w).values;
  std::ostringstream os;
  const bool as_json = a.c.fmt() == Format::Json;
  if (a.qem) {
    const auto grid = default_alpha_grid(w, a.points);
    const auto r = qem_search(w, weight_unit_levels(cfg), grid);
    if (as_json) {
      json curve = json::array();
      for (const auto& p : r.curve) {
        curve.push_back({{"alpha", p.alpha}, {"delta_clip", p.error.delta_clip}, {"delta_proj", p.error.delta_proj},
                         {"delta", p.error.delta}});
      }
      os << json{{"best_alpha", r.best_alpha}, {"best_delta", r.best_delta}, {"curve", curve}}.dump(2) << '\n';
    } else {
      os << "alpha,delta_clip,delta_proj,delta\n";
      for (const auto& p : r.curve) {
        os << num(p.alpha) << ',' << num(p.error.delta_clip) << ',' << num(p.error.delta_proj) << ','
           << num(p.error.delta) << '\n';
      }
    }
  } else if (a.lloyd) {
    const auto r = lloyd_levels(w, std::size_t{1} << a.bits);
    if (as_json) {
      os << json{{"mse", r.mse}, {"iterations", r.iterations}, {"levels", r.levels}, {"mse_history", r.mse_history}}.dump(2)
         << '\n';
    } else {
      os << "index,level\n";
      for (std::size_t i = 0; i < r.levels.size(); ++i) os << i << ',' << num(r.levels[i]) << '\n';
    }
  } else {
    double top = 0.0;
    for (double v : w) top = std::max(top, std::abs(v));
    if (top == 0.0) throw InputError("all-zero tensor has no clipping curve");
    const auto curve = clipping_ratio_curve(w, linear_grid(top, a.points));
    if (as_json) {
      json pts = json::array();
      for (const auto& p : curve) pts.push_back({{"alpha", p.alpha}, {"ratio", p.ratio}});
      os << json{{"max_slope", max_clipping_slope(curve)}, {"curve", pts}}.dump(2) << '\n';
    } else {
      os << "alpha,ratio\n";
      for (const auto& p : curve) os << num(p.alpha) << ',' << num(p.ratio) << '\n';
    }
  }
  run.emit(a.c.out, os.str());
}

// ---- cost ---------------------------------------------------------------

struct CostArgs {
  Common c;
  std::string net;
  std::string totals;
  int wbits = 5;
  int abits = 5;
  int base = 2;
  std::string scheme = "apot";
  std::string convention = "table";
  bool full_edges = false;
};

void run_cost(const CostArgs& a, Run& run) {
  CostConfig cfg;
  cfg.weight_bits = a.wbits;
  cfg.act_bits = a.abits;
  cfg.base_bits = a.base;
  cfg.scheme = parse_scheme_kind(a.scheme);
  cfg.convention = parse_fixops_convention(a.convention);
  cfg.first_last_8bit = !a.full_edges;
  const bool fp = a.wbits >= 32 && a.abits >= 32;
  if (!fp && (a.wbits < 2 || a.wbits > 12 || a.abits < 2 || a.abits > 12)) {
    throw ConfigError("bit-widths must be in [2, 12], or 32/32 for the floating-point baseline");
  }
  const auto r = cost_report(load_layer_table(a.net), cfg);
  const json totals{{"fixops", r.total_fixops}, {"macs", r.total_macs}, {"model_bytes", r.model_bytes},
                    {"model_mb", r.model_mib()}, {"shift_adds", r.shift_add_count},
                    {"convention", to_string(cfg.convention)}};
  std::ostringstream os;
  if (a.c.fmt() == Format::Json) {
    json layers = json::array();
    for (const auto& l : r.layers) {
      layers.push_back({{"name", l.name}, {"weight_bits", l.weight_bits}, {"act_bits", l.act_bits}, {"macs", l.macs},
                        {"fixops", l.fixops}, {"bytes", l.bytes}, {"shift_adds", l.shift_adds}});
    }
    os << json{{"layers", layers}, {"totals", totals}}.dump(2) << '\n';
  } else {
    os << "name,weight_bits,act_bits,macs,fixops,bytes,shift_adds\n";
    for (const auto& l : r.layers) {
      os << l.name << ',' << l.weight_bits << ',' << l.act_bits << ',' << l.macs << ',' << num(l.fixops) << ','
         << l.bytes << ',' << l.shift_adds << '\n';
    }
  }
  run.emit(a.c.out, os.str());
  if (!a.totals.empty()) run.emit(a.totals, totals.dump(2) + "\n");
}

// ---- datasets shared by train and simulate ------------------------------

struct DataArgs {
  std::string csv;
  std::string task = "clusters";
  std::size_t samples = 1000;
  std::size_t dims = 64;
  double separation = 6.0;
  double noise = 0.1;
  std::uint64_t data_seed = 7;
  double scale = 1.0;
};

void add_data_options(CLI::App* sub, DataArgs& d) {
  sub->add_option("--data", d.csv, "CSV dataset (label,f1,...,fn); synthetic task when omitted");
  sub->add_option("--task", d.task, "Synthetic task")->check(CLI::IsMember({"clusters", "moons"}))->capture_default_str();
  sub->add_option("--samples", d.samples, "Synthetic sample count")->capture_default_str();
  sub->add_option("--dims", d.dims, "Feature count of the cluster task")->capture_default_str();
  sub->add_option("--separation", d.separation, "Cluster centre distance")->capture_default_str();
  sub->add_option("--noise", d.noise, "Two-moons jitter")->capture_default_str();
  sub->add_option("--data-seed", d.data_seed, "Synthetic data seed")->capture_default_str();
  sub->add_option("--scale", d.scale, "Features are min-max scaled onto [0, scale]")->capture_default_str();
}

Dataset load_data(const DataArgs& d) {
  Dataset ds;
  if (!d.csv.empty()) {
    ds = load_csv_dataset(d.csv);
  } else if (d.task == "moons") {
    ds = make_two_moons(d.samples, d.noise, d.data_seed);
  } else {
    ds = make_two_clusters(d.samples, d.separation, d.data_seed, d.dims);
  }
  min_max_scale(ds, d.scale);
  return ds;
}

// ---- train --------------------------------------------------------------

struct TrainArgs {
  Common c;
  DataArgs d;
  int bits = 4;
  int abits = 0;  // 0: same as --bits
  int base = 2;
  std::string scheme = "apot";
  std::string ste = "clipped";
  std::vector<std::size_t> hidden{32};
  bool fp = false;
  bool no_wn = false;
  bool first_last_8bit = false;
  double alpha_w = 3.0;
  double alpha_x = 8.0;
  int epochs = 30;
  std::size_t batch = 32;
  SgdConfig sgd;
  std::string init_from;
  std::string log;
  std::string save;
};

void run_train(const TrainArgs& a, Run& run) {
  const Dataset ds = load_data(a.d);
  ModelConfig mc;
  mc.inputs = ds.features;
  mc.classes = ds.classes;
  mc.hidden = a.hidden;
  mc.quantized = !a.fp;
  mc.first_last_8bit = a.first_last_8bit;
  mc.quant.weight_bits = a.bits;
  mc.quant.act_bits = a.abits > 0 ? a.abits : a.bits;
  mc.quant.base_bits = a.base;
  mc.quant.scheme = parse_scheme_kind(a.scheme);
  mc.quant.ste = parse_ste_mode(a.ste);
  mc.quant.normalize_weights = !a.no_wn;
  mc.quant.alpha_w = a.alpha_w;
  mc.quant.alpha_x = a.alpha_x;
  if (a.epochs < 1) throw ConfigError("--epochs must be positive");
  if (a.batch < 1) throw ConfigError("--batch must be positive");
  a.sgd.validate();

  MlpModel model = make_mlp(mc, a.c.seed);
  if (!a.init_from.empty()) model = progressive_init(model, load_checkpoint(a.init_from));
  SgdState sgd(a.sgd);
  TrainOptions opt;
  opt.epochs = a.epochs;
  opt.batch_size = a.batch;
  opt.seed = a.c.seed;
  const TrainLog log = train_epochs(model, ds, sgd, opt);

  if (!a.log.empty()) run.emit(a.log, log.to_csv());
  if (!a.save.empty()) {
    save_checkpoint(model, a.save);
    run.record_file(a.save);
  }
  // A diverged model may hold overflowed weights; report the last good epoch instead.
  Evaluation ev;
  if (log.diverged) {
    ev.accuracy = log.final_accuracy();
    ev.loss = log.epochs.empty() ? NAN : log.epochs.back().loss;
  } else {
    ev = evaluate(model, ds);
  }
  json alphas = json::array();
  for (const auto& l : model.layers()) alphas.push_back({{"alpha_w", l.alpha_w}, {"alpha_x", l.alpha_x}});
  std::ostringstream os;
  if (a.c.fmt() == Format::Json) {
    os << json{{"epochs_run", log.epochs.size()}, {"accuracy", ev.accuracy}, {"loss", ev.loss},
               {"diverged", log.diverged}, {"divergence_step", log.divergence_step},
               {"divergence_reason", log.divergence_reason}, {"thresholds", alphas},
               {"parameters", model.parameter_count()}}
              .dump(2)
       << '\n';
  } else {
    os << "epochs_run,accuracy,loss,diverged\n"
       << log.epochs.size() << ',' << num(ev.accuracy) << ',' << num(ev.loss) << ',' << (log.diverged ? 1 : 0) << '\n';
  }
  run.emit(a.c.out, os.str());
  if (log.diverged) {
    throw ArithmeticError("training diverged at step " + std::to_string(log.divergence_step) + ": " +
                          log.divergence_reason);
  }
}

// ---- simulate -----------------------------------------------------------

struct SimulateArgs {
  Common c;
  DataArgs d;
  std::string ckpt;
  bool exhaustive = false;
  std::string scheme = "apot";
  int bits = 5;
  int base = 2;
  int act_bits = 8;
  bool is_signed = true;
};

void run_simulate(const SimulateArgs& a, Run& run) {
  std::ostringstream os;
  const bool as_json = a.c.fmt() == Format::Json;
  if (a.exhaustive) {
    const SchemeKind kind = parse_scheme_kind(a.scheme);
    const int k = kind == SchemeKind::PoT ? a.bits - (a.is_signed ? 1 : 0) : kind == SchemeKind::Uniform ? 1 : a.base;
    const LevelSet ls = build_levels(kind, 1.0, a.bits, k, a.is_signed);
    if (a.act_bits < 1 || a.act_bits > 16) throw ConfigError("--act-bits must be in [1, 16]");
    const std::uint64_t bad = count_mac_mismatches(ls, a.act_bits);
    const std::uint64_t macs = ls.size() << a.act_bits;
    if (as_json) {
      os << json{{"levels", ls.describe()}, {"act_bits", a.act_bits}, {"macs", macs}, {"mismatches", bad},
                 {"max_terms", ls.max_terms()}}
                .dump(2)
         << '\n';
    } else {
      os << "levels,act_bits,macs,mismatches\n" << ls.describe() << ',' << a.act_bits << ',' << macs << ',' << bad << '\n';
    }
  } else {
    if (a.ckpt.empty()) throw ConfigError("simulate needs --ckpt or --exhaustive");
    const MlpModel model = load_checkpoint(a.ckpt);
    const Dataset ds = load_data(a.d);
    if (ds.features != model.config().inputs) throw ConfigError("dataset feature count does not match the checkpoint");
    const auto r = evaluate_shiftadd(model, ds);
    if (as_json) {
      json layers = json::array();
      for (const auto& c : r.per_layer_per_sample) {
        layers.push_back({{"macs", c.macs}, {"shift_adds", c.shift_adds}, {"slots", c.slots}});
      }
      os << json{{"accuracy", r.accuracy}, {"reference_accuracy", r.reference_accuracy},
                 {"max_deviation", r.max_deviation}, {"max_deviation_float", r.max_deviation_float},
                 {"macs", r.counters.macs}, {"shift_adds", r.counters.shift_adds}, {"slots", r.counters.slots},
                 {"per_layer_per_sample", layers}}
                .dump(2)
         << '\n';
    } else {
      os << "accuracy,reference_accuracy,max_deviation,macs,shift_adds,slots\n"
         << num(r.accuracy) << ',' << num(r.reference_accuracy) << ',' << num(r.max_deviation) << ','
         << r.counters.macs << ',' << r.counters.shift_adds << ',' << r.counters.slots << '\n';
    }
  }
  run.emit(a.c.out, os.str());
}

// ---- dispatch -----------------------------------------------------------

json resolved_options(const CLI::App* sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->get_expected_max() == 0) {
      cfg[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& res = opt->results();
      cfg[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

void write_manifest(const Run& run, const json& config) {
  json m{{"tool", "apot_cli"}, {"version", kToolVersion}, {"command", run.command}, {"argv", run.argv},
         {"seed", run.seed},   {"config", config},         {"outputs", run.outputs}};
  std::string path = run.manifest_path;
  if (path.empty() && !run.primary.empty()) path = run.primary + ".manifest.json";
  if (path.empty()) {
    for (const auto& o : run.outputs) {
      if (o["path"] != "-") {
        path = o["path"].get<std::string>() + ".manifest.json";
        break;
      }
    }
  }
  if (path.empty()) {
    std::cerr << m.dump() << '\n';
  } else {
    write_file(path, m.dump(2) + "\n");
  }
}

int dispatch(std::vector<std::string> args);

int run_app(std::vector<std::string> args) {
  CLI::App app{"APoT quantization toolkit"};
  app.footer(kExitHelp);
  app.require_subcommand(1);
  Run run;
  run.argv = args;
  app.add_option("--manifest", run.manifest_path, "Manifest path (default: <first output>.manifest.json)");

  std::uint64_t env_seed = 0;
  if (const char* s = std::getenv("APOT_SEED")) {
    const std::string v(s);
    const auto r = std::from_chars(v.data(), v.data() + v.size(), env_seed);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) throw ConfigError("APOT_SEED must be an unsigned integer");
  }

  LevelsArgs la;
  auto* levels = app.add_subcommand("levels", "Emit a level set with PoT decompositions");
  add_common(levels, la.c, false);
  levels->add_option("--scheme", la.scheme, "uniform | pot | apot")->capture_default_str();
  levels->add_option("--bits", la.bits, "Bit-width (sign bit included when signed)")->capture_default_str();
  levels->add_option("--base", la.base, "APoT base bit-width k")->capture_default_str();
  levels->add_option("--alpha", la.alpha, "Clipping threshold")->capture_default_str();
  levels->add_flag("--signed", la.is_signed, "Signed (weight) level set");

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand("quantize", "Quantize a tensor file");
  quantize->add_option("--in", qa.in, "Input tensor (.f32)")->required();
  quantize->add_option("--out", qa.out, "Output tensor (.f32)")->required();
  quantize->add_option("--summary", qa.summary, "Summary path (stdout when omitted)");
  quantize->add_option("--format", qa.format, "Summary format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  quantize->add_option("--scheme", qa.scheme)->capture_default_str();
  quantize->add_option("--bits", qa.bits)->capture_default_str();
  quantize->add_option("--base", qa.base)->capture_default_str();
  quantize->add_option("--alpha", qa.alpha)->capture_default_str();
  auto* wflag = quantize->add_flag("--weights", qa.weights, "Signed weight path with normalization (default)");
  quantize->add_flag("--activations", qa.activations, "Unsigned activation path")->excludes(wflag);
  quantize->add_flag("--no-wn", qa.no_wn, "Skip weight normalization");

  GradcheckArgs ga;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of the backward passes");
  add_common(gradcheck, ga.c, true);
  ga.c.format = "json";
  gradcheck->add_option("--scheme", ga.scheme)->capture_default_str();
  gradcheck->add_option("--bits", ga.bits)->capture_default_str();
  gradcheck->add_option("--base", ga.base)->capture_default_str();
  gradcheck->add_option("--alpha", ga.alpha)->capture_default_str();
  gradcheck->add_option("--samples", ga.samples)->capture_default_str();

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Error decomposition, QEM, Lloyd and clipping curves");
  add_common(analyze, aa.c, false);
  analyze->add_option("--in", aa.in, "Input tensor (.f32)")->required();
  analyze->add_option("--scheme", aa.scheme)->capture_default_str();
  analyze->add_option("--bits", aa.bits)->capture_default_str();
  analyze->add_option("--base", aa.base)->capture_default_str();
  analyze->add_option("--points", aa.points, "Grid size")->capture_default_str();
  analyze->add_flag("--qem", aa.qem, "Threshold search curve");
  analyze->add_flag("--lloyd", aa.lloyd, "Lloyd-Max levels (2^bits of them)");
  analyze->add_flag("--clipcurve", aa.clipcurve, "Clipping ratio against threshold");
  analyze->add_flag("--normalize", aa.normalize_first, "Weight-normalize the tensor first");

  CostArgs ca;
  auto* cost = app.add_subcommand("cost", "FixOPS, model size and shift-add counts of a layer table");
  add_common(cost, ca.c, false);
  cost->add_option("--net", ca.net, "Layer table")->required();
  cost->add_option("--totals", ca.totals, "Also write the totals JSON here");
  cost->add_option("--wbits", ca.wbits)->capture_default_str();
  cost->add_option("--abits", ca.abits)->capture_default_str();
  cost->add_option("--base", ca.base)->capture_default_str();
  cost->add_option("--scheme", ca.scheme)->capture_default_str();
  cost->add_option("--fixops-convention", ca.convention, "table | shift-add")->capture_default_str();
  cost->add_flag("--no-8bit-edges", ca.full_edges, "Quantize first and last layers like the rest");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the dense network");
  add_common(train, ta.c, true);
  add_data_options(train, ta.d);
  train->add_option("--bits", ta.bits, "Weight bits (32 with --fp)")->capture_default_str();
  train->add_option("--abits", ta.abits, "Activation bits (default: --bits)");
  train->add_option("--base", ta.base)->capture_default_str();
  train->add_option("--scheme", ta.scheme)->capture_default_str();
  train->add_option("--ste", ta.ste, "clipped | full")->capture_default_str();
  train->add_option("--hidden", ta.hidden, "Hidden widths")->capture_default_str();
  train->add_flag("--fp", ta.fp, "Full-precision network");
  train->add_flag("--no-wn", ta.no_wn, "Disable weight normalization");
  train->add_flag("--first-last-8bit", ta.first_last_8bit);
  train->add_option("--alpha-w", ta.alpha_w, "Initial weight threshold")->capture_default_str();
  train->add_option("--alpha-x", ta.alpha_x, "Initial activation threshold")->capture_default_str();
  train->add_option("--epochs", ta.epochs)->capture_default_str();
  train->add_option("--batch", ta.batch)->capture_default_str();
  train->add_option("--lr", ta.sgd.lr_w)->capture_default_str();
  train->add_option("--lr-alpha-w", ta.sgd.lr_alpha_w)->capture_default_str();
  train->add_option("--lr-alpha-x", ta.sgd.lr_alpha_x)->capture_default_str();
  train->add_option("--momentum", ta.sgd.momentum)->capture_default_str();
  train->add_option("--weight-decay", ta.sgd.weight_decay)->capture_default_str();
  train->add_option("--alpha-decay", ta.sgd.alpha_decay)->capture_default_str();
  train->add_option("--init-from", ta.init_from, "Checkpoint to initialize from");
  train->add_option("--log", ta.log, "Per-epoch CSV log");
  train->add_option("--save", ta.save, "Checkpoint output");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Shift-add inference or exhaustive MAC check");
  add_common(simulate, sa.c, false);
  add_data_options(simulate, sa.d);
  simulate->add_option("--ckpt", sa.ckpt, "Checkpoint to run");
  simulate->add_flag("--exhaustive", sa.exhaustive, "Check every level x activation code");
  simulate->add_option("--scheme", sa.scheme)->capture_default_str();
  simulate->add_option("--bits", sa.bits)->capture_default_str();
  simulate->add_option("--base", sa.base)->capture_default_str();
  simulate->add_option("--act-bits", sa.act_bits)->capture_default_str();

  std::string replay_manifest;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("--from", replay_manifest, "Manifest file")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (replay->parsed()) {
    const json m = json::parse(read_file(replay_manifest));
    return dispatch(m.at("argv").get<std::vector<std::string>>());
  }

  for (CLI::App* sub : {gradcheck, train}) {
    if (sub->parsed() && sub->get_option("--seed")->count() == 0) {
      (sub == gradcheck ? ga.c.seed : ta.c.seed) = env_seed;
    }
  }

  CLI::App* chosen = app.get_subcommands().front();
  run.command = chosen->get_name();
  run.seed = chosen == gradcheck ? ga.c.seed : chosen == train ? ta.c.seed : 0;
  for (const auto* c : {&la.c, &ga.c, &aa.c, &ca.c, &ta.c, &sa.c}) {
    if (!c->out.empty()) run.primary = c->out;
  }
  if (chosen == quantize) run.primary = qa.out;
  json config = resolved_options(chosen);
  if (config.contains("seed")) config["seed"] = std::to_string(run.seed);

  try {
    if (chosen == levels) run_levels(la, run);
    if (chosen == quantize) run_quantize(qa, run);
    if (chosen == gradcheck) run_gradcheck(ga, run);
    if (chosen == analyze) run_analyze(aa, run);
    if (chosen == cost) run_cost(ca, run);
    if (chosen == train) run_train(ta, run);
    if (chosen == simulate) run_simulate(sa, run);
  } catch (const ArithmeticError&) {
    // A diverged run still leaves its log behind; record it before reporting.
    if (run.outputs.empty()) throw;
    write_manifest(run, config);
    throw;
  }
  write_manifest(run, config);
  return kOk;
}

int report(const char* kind, int code, const std::exception& e) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", e.what()}, {"exit_code", code}}}}.dump() << '\n';
  return code;
}

int dispatch(std::vector<std::string> args) {
  try {
    return run_app(std::move(args));
  } catch (const ConfigError& e) {
    return report("config", kConfig, e);
  } catch (const InputError& e) {
    return report("input", kInput, e);
  } catch (const IoError& e) {
    return report("io", kIo, e);
  } catch (const ArithmeticError& e) {
    return report("arithmetic", kArithmetic, e);
  } catch (const json::exception& e) {
    return report("input", kInput, e);
  } catch (const std::exception& e) {
    return report("internal", kInternal, e);
  }
}

}  // namespace

int main(int argc, char** argv) { return dispatch(std::vector<std::string>(argv + 1, argv + argc)); }
