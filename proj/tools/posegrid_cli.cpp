// posegrid command line: codebooks, synthetic data, DB building, training,
// matching, evaluation and benchmarking.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "posegrid/error.hpp"
#include "posegrid/io.hpp"
#include "posegrid/pipeline.hpp"
#include "posegrid/retrieval.hpp"
#include "posegrid/translation.hpp"

namespace fs = std::filesystem;
using namespace posegrid;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct SampleViewsArgs {
  int level = 2;
  double min_z = 0.0;
  int inplane = 1;
  fs::path out;
};

struct SynthArgs {
  std::size_t objects = 8;
  std::uint32_t first_id = 1;
  std::uint64_t seed = 11;
  int level = 2;
  double min_z = 0.0;
  int inplane = 1;
  std::size_t queries = 50;
  std::uint64_t query_seed = 5;
  double sigma = 1.0;
  double occlusion = 0.0;
  bool no_clutter = false;
  fs::path out;
};

struct BuildDbArgs {
  fs::path templates;
  fs::path embedding;
  fs::path out;
};

struct TrainArgs {
  std::size_t objects = 6;
  std::uint32_t first_id = 1;
  std::uint64_t seed = 11;
  int level = 3;
  double sigma = 1.0;
  TrainConfig config;
  fs::path out;
};

struct MatchArgs {
  fs::path db;
  fs::path query;
  fs::path embedding;
  std::size_t k = 1;
  double delta = kDefaultDelta;
  bool no_occlusion = false;
  bool active_cells = false;
  std::optional<std::uint32_t> object;
  std::size_t threads = 1;
  std::string isa = "auto";
  bool with_translation = false;
  std::vector<double> bbox;  // cx cy diag
  double focal = kSynthFocalPx;
  std::vector<double> principal{kSynthPrincipalPoint[0], kSynthPrincipalPoint[1]};
};

struct EvaluateArgs {
  fs::path db;
  fs::path queries;
  fs::path embedding;
  fs::path predictions;
  fs::path truth;
  std::vector<std::uint32_t> symmetric;
  double delta = kDefaultDelta;
  bool no_occlusion = false;
  std::size_t threads = 1;
  std::string isa = "auto";
};

struct BenchArgs {
  fs::path db;
  std::size_t queries = 10;
  std::size_t k = 1;
  std::size_t threads = 1;
  std::string isa = "auto";
  std::uint64_t seed = 1;
};

Embedding load_embedding(const fs::path& path, std::size_t channels) {
  return path.empty() ? identity_embedding(channels) : io::read_embd(path);
}

std::vector<Viewpoint> codebook(int level, double min_z, int inplane) {
  return enumerate_viewpoints(level, min_z, inplane);
}

// TSV row: object_id dx dy dz [inplane]
PosePrediction parse_pose(std::istringstream& in, const std::string& line) {
  PosePrediction p;
  Vec3 d{};
  double inplane = 0.0;
  if (!(in >> p.object_id >> d[0] >> d[1] >> d[2])) throw Error(Errc::validation, "malformed row: " + line);
  in >> inplane;
  p.viewpoint = Viewpoint(d, inplane);
  return p;
}

std::vector<PosePrediction> read_pose_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<PosePrediction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    out.push_back(parse_pose(row, line));
  }
  return out;
}

struct QueryRow {
  fs::path file;
  PosePrediction truth;
};

// queries.tsv: file object_id dx dy dz inplane; paths relative to the table.
std::vector<QueryRow> read_query_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<QueryRow> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string file;
    row >> file;
    out.push_back({path.parent_path() / file, parse_pose(row, line)});
  }
  return out;
}

void print_pose(std::ostream& os, const PosePrediction& p) {
  const Vec3& d = p.viewpoint.direction();
  os << p.object_id << '\t' << d[0] << '\t' << d[1] << '\t' << d[2] << '\t' << p.viewpoint.inplane_deg() << '\n';
}

void report(std::span<const PosePrediction> pred, std::span<const PosePrediction> truth,
            std::span<const std::uint32_t> symmetric) {
  std::map<std::uint32_t, std::pair<std::vector<PosePrediction>, std::vector<PosePrediction>>> per_object;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    per_object[truth[i].object_id].first.push_back(pred[i]);
    per_object[truth[i].object_id].second.push_back(truth[i]);
  }
  for (const auto& [id, pt] : per_object) {
    std::printf("object %u\tAcc15 %.4f\tMeanPoseError %.4f\tn %zu\n", id, acc15(pt.first, pt.second, symmetric),
                mean_pose_error(pt.first, pt.second, symmetric), pt.second.size());
  }
  std::printf("Acc15 %.4f\n", acc15(pred, truth, symmetric));
  std::printf("MeanPoseError %.4f\n", mean_pose_error(pred, truth, symmetric));
}

MatchOptions options_from(double delta, bool no_occlusion, std::size_t threads, const std::string& isa) {
  MatchOptions o;
  o.delta = delta;
  o.use_occlusion = !no_occlusion;
  o.threads = threads;
  o.isa = kernels::parse_isa(isa);
  return o;
}

void run_sample_views(const SampleViewsArgs& a) {
  const auto views = codebook(a.level, a.min_z, a.inplane);
  std::vector<io::IndexedViewpoint> out;
  out.reserve(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    out.push_back({static_cast<std::uint32_t>(i), views[i], viewpoint_to_rotation(views[i])});
  }
  io::write_viewpoints(a.out, out);
  std::printf("%zu\n", out.size());
}

void run_synth(const SynthArgs& a) {
  const auto objects = make_objects(id_range(a.first_id, a.objects), a.seed);
  const auto views = codebook(a.level, a.min_z, a.inplane);
  fs::create_directories(a.out / "queries");
  io::write_tpdb(a.out / "raw_templates.tpdb", render_templates(objects, views));

  QuerySpec spec;
  spec.sigma = a.sigma;
  spec.occlusion = a.occlusion;
  spec.clutter = !a.no_clutter;
  spec.min_z = a.min_z;
  const auto queries = sample_queries(objects, a.queries, spec, a.query_seed);
  std::ofstream table(a.out / "queries.tsv");
  table.precision(17);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "q%05zu.fgrd", i);
    io::write_fgrd(a.out / "queries" / name, queries[i].raw);
    table << "queries/" << name << '\t';
    print_pose(table, {queries[i].object_id, queries[i].viewpoint});
  }
  std::printf("templates %zu\nqueries %zu\n", objects.size() * views.size(), queries.size());
}

void run_build_db(const BuildDbArgs& a) {
  std::vector<TemplateRecord> records = io::read_tpdb_records(a.templates);
  if (records.empty()) throw Error(Errc::build, "no templates in " + a.templates.string());
  const Embedding e = load_embedding(a.embedding, records.front().features.channels());
  for (auto& r : records) r = embed_record(r, e);
  const TemplateDB db = build_db(std::move(records));
  io::write_tpdb(a.out, db);
  std::printf("templates %zu\nchannels %zu\n", db.size(), db.channels());
}

void run_train(const TrainArgs& a) {
  const auto objects = make_objects(id_range(a.first_id, a.objects), a.seed);
  const auto views = codebook(a.level, 0.0, 1);
  TrainDemoConfig cfg;
  cfg.train = a.config;
  cfg.query.sigma = a.sigma;
  const TrainDemoResult r = train_demo(objects, views, cfg);
  io::write_embd(a.out, r.embedding);
  const std::size_t every = std::max<std::size_t>(1, r.losses.size() / 10);
  for (std::size_t i = 0; i < r.losses.size(); i += every) std::printf("step %zu\tloss %.6f\n", i, r.losses[i]);
  if (!r.losses.empty()) std::printf("final_loss %.6f\n", r.losses.back());
}

void run_match(const MatchArgs& a) {
  const TemplateDB db = io::read_tpdb(a.db);
  const FeatureGrid raw = io::read_fgrd(a.query);
  const Embedding e = load_embedding(a.embedding, raw.channels());
  const FeatureGrid q = normalize_cells(embed(raw, e));
  MatchOptions o = options_from(a.delta, a.no_occlusion, a.threads, a.isa);
  o.k = a.k;
  o.restrict_object = a.object;
  if (a.active_cells) o.normalizer = Normalizer::active_cells;
  const MatchResult m = match(q, db, o);

  std::optional<BBox> box;
  Intrinsics cam{a.focal, {a.principal.at(0), a.principal.at(1)}};
  if (a.with_translation) {
    if (a.bbox.size() != 3) throw Error(Errc::parameter, "--with-translation needs --bbox cx,cy,diag");
    box = BBox{{a.bbox[0], a.bbox[1]}, a.bbox[2]};
  }
  for (const auto& c : m.ranked) {
    std::printf("%u\t%u\t%.6f", c.object_id, c.template_index, c.score);
    if (box) {
      const Vec3 t = translation_for(db.entry(c.position), *box, cam);
      std::printf("\t%.4f\t%.4f\t%.4f", t[0], t[1], t[2]);
    }
    std::printf("\n");
  }
}

void run_evaluate(const EvaluateArgs& a) {
  std::vector<PosePrediction> pred, truth;
  if (!a.predictions.empty()) {
    if (a.truth.empty()) throw Error(Errc::parameter, "--predictions needs --truth");
    pred = read_pose_table(a.predictions);
    truth = read_pose_table(a.truth);
  } else {
    if (a.db.empty() || a.queries.empty()) throw Error(Errc::parameter, "give --db and --queries, or --predictions");
    const TemplateDB db = io::read_tpdb(a.db);
    const auto rows = read_query_table(a.queries);
    const MatchOptions o = options_from(a.delta, a.no_occlusion, a.threads, a.isa);
    std::optional<Embedding> e;
    for (const auto& row : rows) {
      const FeatureGrid raw = io::read_fgrd(row.file);
      if (!e) e = load_embedding(a.embedding, raw.channels());
      const MatchResult m = match(normalize_cells(embed(raw, *e)), db, o);
      const TemplateEntry& best = db.entry(m.ranked.front().position);
      pred.push_back({best.object_id, best.viewpoint});
      truth.push_back(row.truth);
    }
  }
  if (pred.size() != truth.size()) throw Error(Errc::length_mismatch, "prediction and truth counts differ");
  if (truth.empty()) throw Error(Errc::insufficient_data, "nothing to evaluate");
  report(pred, truth, a.symmetric);
}

void run_bench(const BenchArgs& a) {
  const TemplateDB db = io::read_tpdb(a.db);
  if (a.queries == 0) throw Error(Errc::parameter, "--queries must be positive");
  MatchOptions o = options_from(kDefaultDelta, false, a.threads, a.isa);
  o.k = a.k;
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < a.queries; ++i) {
    FeatureGrid q(db.height(), db.width(), db.channels());
    for (double& x : q.data()) x = normal(rng);
    q = normalize_cells(q);
    const auto t0 = std::chrono::steady_clock::now();
    const MatchResult m = match(q, db, o);
    total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (m.ranked.empty()) throw Error(Errc::build, "empty ranking");
  }
  const double mean = total / static_cast<double>(a.queries);
  std::printf("templates %zu\nisa %s\nthreads %zu\nmean_latency_s %.6f\nthroughput_templates_per_s %.1f\n", db.size(),
              std::string(kernels::name(o.isa)).c_str(), a.threads, mean, static_cast<double>(db.size()) / mean);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Template-based pose retrieval over local feature grids"};
  app.require_subcommand(1);

  SampleViewsArgs sv;
  auto* c_sv = app.add_subcommand("sample-views", "Write an icosphere viewpoint codebook");
  c_sv->add_option("--level", sv.level, "Icosphere subdivision level")->check(CLI::Range(0, kMaxIcosphereLevel));
  c_sv->add_option("--min-z", sv.min_z, "Keep directions with z >= this");
  c_sv->add_option("--inplane", sv.inplane, "In-plane rotations per direction")->check(CLI::PositiveNumber);
  c_sv->add_option("--out", sv.out)->required();

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "Render synthetic templates and queries");
  c_sy->add_option("--objects", sy.objects);
  c_sy->add_option("--first-id", sy.first_id);
  c_sy->add_option("--seed", sy.seed, "Object seed");
  c_sy->add_option("--level", sy.level)->check(CLI::Range(0, kMaxIcosphereLevel));
  c_sy->add_option("--min-z", sy.min_z);
  c_sy->add_option("--inplane", sy.inplane)->check(CLI::PositiveNumber);
  c_sy->add_option("--queries", sy.queries);
  c_sy->add_option("--query-seed", sy.query_seed);
  c_sy->add_option("--sigma", sy.sigma);
  c_sy->add_option("--occlusion", sy.occlusion)->check(CLI::Range(0.0, 1.0));
  c_sy->add_flag("--no-clutter", sy.no_clutter);
  c_sy->add_option("--out", sy.out, "Output directory")->required();

  BuildDbArgs bd;
  auto* c_bd = app.add_subcommand("build-db", "Embed and normalize raw templates into a DB");
  c_bd->add_option("--templates", bd.templates)->required()->check(CLI::ExistingFile);
  c_bd->add_option("--embedding", bd.embedding)->check(CLI::ExistingFile);
  c_bd->add_option("--out", bd.out)->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train-demo", "Train an embedding on synthetic objects");
  c_tr->add_option("--objects", tr.objects);
  c_tr->add_option("--first-id", tr.first_id);
  c_tr->add_option("--seed", tr.seed, "Object seed");
  c_tr->add_option("--level", tr.level, "Training codebook level")->check(CLI::Range(0, kMaxIcosphereLevel));
  c_tr->add_option("--sigma", tr.sigma, "Query noise");
  c_tr->add_option("--steps", tr.config.steps);
  c_tr->add_option("--lr", tr.config.learning_rate);
  c_tr->add_option("--batch", tr.config.batch_pairs);
  c_tr->add_option("--tau", tr.config.tau);
  c_tr->add_option("--train-seed", tr.config.seed);
  c_tr->add_option("--channels", tr.config.c_out, "Output channels");
  c_tr->add_option("--hidden", tr.config.hidden_channels, "Hidden tanh layer width (0 = none)");
  c_tr->add_option("--out", tr.out)->required();

  MatchArgs ma;
  auto* c_ma = app.add_subcommand("match", "Rank templates for one query grid");
  c_ma->add_option("--db", ma.db)->required()->check(CLI::ExistingFile);
  c_ma->add_option("--query", ma.query)->required()->check(CLI::ExistingFile);
  c_ma->add_option("--embedding", ma.embedding)->check(CLI::ExistingFile);
  c_ma->add_option("--k", ma.k)->check(CLI::PositiveNumber);
  c_ma->add_option("--delta", ma.delta)->check(CLI::Range(-1.0, 1.0));
  c_ma->add_flag("--no-occlusion", ma.no_occlusion);
  c_ma->add_flag("--active-cells", ma.active_cells, "Normalize by surviving cells instead of mask area");
  c_ma->add_option("--object", ma.object);
  c_ma->add_option("--threads", ma.threads)->check(CLI::PositiveNumber);
  c_ma->add_option("--isa", ma.isa, "auto, scalar, avx2 or neon");
  c_ma->add_flag("--with-translation", ma.with_translation);
  c_ma->add_option("--bbox", ma.bbox, "Query box cx,cy,diag in pixels")->delimiter(',');
  c_ma->add_option("--focal", ma.focal, "Query focal length in pixels");
  c_ma->add_option("--principal", ma.principal, "Query principal point cx,cy")->delimiter(',')->expected(2);

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Acc15 and mean pose error");
  c_ev->add_option("--db", ev.db)->check(CLI::ExistingFile);
  c_ev->add_option("--queries", ev.queries, "queries.tsv from synth")->check(CLI::ExistingFile);
  c_ev->add_option("--embedding", ev.embedding)->check(CLI::ExistingFile);
  c_ev->add_option("--predictions", ev.predictions, "TSV: object_id dx dy dz [inplane]")->check(CLI::ExistingFile);
  c_ev->add_option("--truth", ev.truth)->check(CLI::ExistingFile);
  c_ev->add_option("--symmetric", ev.symmetric, "Object ids symmetric about z")->delimiter(',');
  c_ev->add_option("--delta", ev.delta)->check(CLI::Range(-1.0, 1.0));
  c_ev->add_flag("--no-occlusion", ev.no_occlusion);
  c_ev->add_option("--threads", ev.threads)->check(CLI::PositiveNumber);
  c_ev->add_option("--isa", ev.isa);

  BenchArgs be;
  auto* c_be = app.add_subcommand("bench", "Matching latency over random queries");
  c_be->add_option("--db", be.db)->required()->check(CLI::ExistingFile);
  c_be->add_option("--queries", be.queries)->check(CLI::PositiveNumber);
  c_be->add_option("--k", be.k)->check(CLI::PositiveNumber);
  c_be->add_option("--threads", be.threads)->check(CLI::PositiveNumber);
  c_be->add_option("--isa", be.isa);
  c_be->add_option("--seed", be.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (c_sv->parsed()) run_sample_views(sv);
    if (c_sy->parsed()) run_synth(sy);
    if (c_bd->parsed()) run_build_db(bd);
    if (c_tr->parsed()) run_train(tr);
    if (c_ma->parsed()) run_match(ma);
    if (c_ev->parsed()) run_evaluate(ev);
    if (c_be->parsed()) run_bench(be);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::parameter ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
