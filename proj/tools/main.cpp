// eadk command-line front end; all heavy lifting goes through the C API.
#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eadk.h"

namespace fs = std::filesystem;

namespace {

int fail(eadk_status st) {
  std::cerr << "error: " << eadk_last_error() << "\n";
  return static_cast<int>(st);
}

#define CHECK(call)                         \
  do {                                      \
    eadk_status st_ = (call);               \
    if (st_ != EADK_OK) return fail(st_);   \
  } while (0)

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

using ConfigKv = std::vector<std::pair<std::string, std::string>>;

// resolved-config echo: stdout plus a run log for reproducibility; the log
// omits path-valued keys so reruns into different directories stay
// byte-identical
bool path_key(const std::string& k) {
  return k == "out" || k == "model" || k == "data" || k == "loss_csv" ||
         k == "image" || k == "json" || k == "embeddings";
}

void echo_config(const ConfigKv& kv, const std::string& log_path) {
  std::ostringstream os, file_os;
  for (const auto& [k, v] : kv) {
    os << k << " = " << v << "\n";
    if (!path_key(k)) file_os << k << " = " << v << "\n";
  }
  std::cout << os.str();
  if (log_path.empty()) return;
  fs::create_directories(fs::path(log_path).parent_path());
  std::ofstream f(log_path);
  f << file_os.str();
}

int thread_budget(int cells) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EADK_THREADS")) n = std::atoi(env);
  if (n < 1) n = 1;
  return std::min(n, cells);
}

struct RunResult {
  uint64_t run_seed = 0;
  int shots = 0;
  int T = 0;
  eadk_eval_summary summary{};
  eadk_status status = EADK_OK;
  std::string error;
};

struct Stats {
  double mean = 0, stddev = 0;
};

Stats mean_std(const std::vector<double>& xs) {
  Stats s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

// one adaptation cell: sample shots, adapt, evaluate on the test split
RunResult run_cell(const std::string& model_path, const std::string& train_dir,
                   const std::string& test_dir, const eadk_adapt_params& base,
                   int shots, int T, uint64_t run_seed, double score_thr,
                   const std::string& metrics_csv,
                   const std::string& table_out) {
  RunResult r;
  r.run_seed = run_seed;
  r.shots = shots;
  r.T = T;
  eadk_model* model = nullptr;
  eadk_table* table = nullptr;
  eadk_adapt_params p = base;
  p.shots = shots;
  p.embeddings_per_class = T;
  p.seed = run_seed;
  r.status = eadk_model_open(model_path.c_str(), &model);
  if (r.status == EADK_OK)
    r.status = eadk_adapt(model, train_dir.c_str(), &p,
                          metrics_csv.empty() ? nullptr : metrics_csv.c_str(),
                          &table);
  if (r.status == EADK_OK && !table_out.empty())
    r.status = eadk_table_save(table, table_out.c_str());
  if (r.status == EADK_OK)
    r.status = eadk_evaluate(model, table, test_dir.c_str(), score_thr, &r.summary);
  if (r.status != EADK_OK) r.error = eadk_last_error();
  eadk_table_close(table);
  eadk_model_close(model);
  return r;
}

// cells run in parallel up to EADK_THREADS; results land in input order
std::vector<RunResult> run_cells(
    const std::vector<std::function<RunResult()>>& cells) {
  std::vector<RunResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  const int n_threads = thread_budget(static_cast<int>(cells.size()));
  std::vector<std::thread> workers;
  for (int t = 0; t < n_threads; ++t)
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        results[i] = cells[i]();
      }
    });
  for (auto& w : workers) w.join();
  return results;
}

void write_results_csv(const std::string& path, const std::string& split,
                       const std::vector<RunResult>& results) {
  std::ofstream os(path);
  os << "split,shots,run_seed,map_5095,map_50,map_75\n";
  for (const RunResult& r : results)
    os << split << "," << r.shots << "," << r.run_seed << ","
       << fmt(r.summary.map_5095) << "," << fmt(r.summary.map_50) << ","
       << fmt(r.summary.map_75) << "\n";
}

void append_aggregate(std::ofstream& os, const std::string& label,
                      const std::vector<double>& xs) {
  Stats s = mean_std(xs);
  os << label << "," << fmt(s.mean) << "," << fmt(s.stddev) << "," << xs.size()
     << "\n";
}

struct SweepRow {
  int shots = 0;
  Stats m5095, m50, m75;
};

void write_sweep_svg(const std::string& path, const std::vector<SweepRow>& rows) {
  const int W = 640, H = 420, ml = 60, mr = 20, mt = 30, mb = 50;
  const double pw = W - ml - mr, ph = H - mt - mb;
  double max_shots = 1;
  for (const auto& r : rows) max_shots = std::max(max_shots, static_cast<double>(r.shots));
  auto px = [&](double shots) { return ml + pw * shots / max_shots; };
  auto py = [&](double v) { return mt + ph * (1.0 - std::min(1.0, std::max(0.0, v))); };

  std::ofstream os(path);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
     << mt + ph << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\" font-size=\"14\">shots</text>\n";
  os << "<text x=\"16\" y=\"" << mt + ph / 2
     << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 "
     << mt + ph / 2 << ")\">score</text>\n";

  struct Series {
    const char* name;
    const char* color;
    Stats SweepRow::* field;
  };
  const Series series[] = {{"map_50", "#1f77b4", &SweepRow::m50},
                           {"map_75", "#2ca02c", &SweepRow::m75},
                           {"map_5095", "#d62728", &SweepRow::m5095}};
  for (const Series& s : series) {
    // +/- sigma band
    std::ostringstream band;
    for (const auto& r : rows)
      band << px(r.shots) << "," << py((r.*(s.field)).mean + (r.*(s.field)).stddev) << " ";
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
      band << px(it->shots) << "," << py((*it.*(s.field)).mean - (*it.*(s.field)).stddev) << " ";
    os << "<polygon points=\"" << band.str() << "\" fill=\"" << s.color
       << "\" opacity=\"0.15\"/>\n";
    std::ostringstream line;
    for (const auto& r : rows)
      line << px(r.shots) << "," << py((r.*(s.field)).mean) << " ";
    os << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\""
       << s.color << "\" stroke-width=\"2\"/>\n";
  }
  int ly = mt + 16;
  for (const Series& s : series) {
    os << "<line x1=\"" << ml + 12 << "\" y1=\"" << ly << "\" x2=\"" << ml + 40
       << "\" y2=\"" << ly << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << ml + 46 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
       << s.name << "</text>\n";
    ly += 18;
  }
  os << "</svg>\n";
}

// --embeddings accepts a checkpoint path, "base", or "random:SEED"
eadk_status open_embeddings(const std::string& arg, const eadk_model* model,
                            int num_classes, int T, eadk_table** out) {
  if (arg == "base") return eadk_table_base(model, out);
  if (arg.rfind("random:", 0) == 0) {
    const uint64_t seed = std::strtoull(arg.c_str() + 7, nullptr, 10);
    return eadk_table_random(model, num_classes, T, seed, out);
  }
  return eadk_table_open(arg.c_str(), out);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eadk: few-shot embedding adaptation for a frozen toy "
               "open-vocabulary detector"};
  app.require_subcommand(1);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic benchmark");
  std::string gen_out = "data";
  uint64_t gen_seed = 7;
  eadk_gen_params gp;
  eadk_gen_params_init(&gp);
  int gen_scenes = -1;
  gen->add_option("--out", gen_out, "output dataset root");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--occlusion", gp.occlusion, "placement overlap bias in [0,1]");
  gen->add_option("--scenes", gen_scenes, "train scenes per split (overrides defaults)");
  gen->add_option("--max-objects", gp.max_objects, "max objects per scene");
  gen->set_config("--config");

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "train the full detector on the base split");
  std::string pre_data = "data", pre_out = "model.eadk", pre_split = "base_train",
              pre_val = "base_val", pre_loss_csv;
  bool pre_dry = false, pre_no_augment = false;
  eadk_pretrain_params pp;
  eadk_pretrain_params_init(&pp);
  pre->add_option("--data", pre_data, "dataset root");
  pre->add_option("--out", pre_out, "output model checkpoint");
  pre->add_option("--train-split", pre_split, "training split name");
  pre->add_option("--val-split", pre_val, "validation split name");
  pre->add_option("--iters", pp.iterations, "training iterations");
  pre->add_option("--batch", pp.batch_size, "batch size");
  pre->add_option("--lr", pp.lr0, "initial learning rate (cosine decay)");
  pre->add_option("--weight-decay", pp.weight_decay, "decoupled weight decay");
  pre->add_option("--seed", pp.seed, "training seed");
  pre->add_option("--embeddings-per-class", pp.embeddings_per_class, "base table T");
  pre->add_option("--loss-csv", pre_loss_csv, "per-iteration loss CSV");
  pre->add_flag("--no-augment", pre_no_augment, "disable augmentation");
  pre->add_flag("--dry-run", pre_dry, "echo resolved config and exit");
  pre->set_config("--config");

  // ---- adapt ----
  auto* ada = app.add_subcommand("adapt", "few-shot adaptation of the embedding table");
  std::string ada_model = "model.eadk", ada_data = "data",
              ada_train = "novel_train", ada_test = "novel_test",
              ada_out = "adapt_out", ada_T = "4";
  int ada_shots = 16, ada_runs = 10;
  double ada_thr = 0.05;
  bool ada_dry = false, ada_no_augment = false;
  eadk_adapt_params ap;
  eadk_adapt_params_init(&ap);
  ada->add_option("--model", ada_model, "pretrained model checkpoint");
  ada->add_option("--data", ada_data, "dataset root");
  ada->add_option("--train-split", ada_train, "adaptation split name");
  ada->add_option("--test-split", ada_test, "evaluation split name");
  ada->add_option("--shots", ada_shots, "images available for adaptation (k)");
  ada->add_option("--runs", ada_runs, "independent runs to aggregate");
  ada->add_option("--embeddings-per-class", ada_T,
                  "embeddings per class T (comma list sweeps T)");
  ada->add_option("--iters", ap.iterations, "training iterations");
  ada->add_option("--batch", ap.batch_size, "batch size");
  ada->add_option("--lr", ap.lr0, "initial learning rate (cosine decay)");
  ada->add_option("--weight-decay", ap.weight_decay, "decoupled weight decay");
  ada->add_option("--sigma-init", ap.sigma_init, "table init stddev");
  ada->add_option("--seed", ap.seed, "base seed; run r uses seed+r");
  ada->add_option("--score-thr", ada_thr, "detection score threshold");
  ada->add_option("--out", ada_out, "output directory");
  ada->add_flag("--no-augment", ada_no_augment, "disable augmentation");
  ada->add_flag("--dry-run", ada_dry, "echo resolved config and exit");
  ada->set_config("--config");

  // ---- sweep ----
  auto* swp = app.add_subcommand("sweep", "shot sweep with trend plot");
  std::string swp_model = "model.eadk", swp_data = "data",
              swp_train = "novel_train", swp_test = "novel_test",
              swp_out = "sweep_out", swp_shots = "1,2,4,8,16";
  int swp_runs = 10, swp_T = 4;
  double swp_thr = 0.05;
  eadk_adapt_params sp;
  eadk_adapt_params_init(&sp);
  bool swp_dry = false;
  swp->add_option("--model", swp_model, "pretrained model checkpoint");
  swp->add_option("--data", swp_data, "dataset root");
  swp->add_option("--train-split", swp_train, "adaptation split name");
  swp->add_option("--test-split", swp_test, "evaluation split name");
  swp->add_option("--shots", swp_shots, "comma-separated shot counts");
  swp->add_option("--runs", swp_runs, "runs per shot count");
  swp->add_option("--embeddings-per-class", swp_T, "embeddings per class T");
  swp->add_option("--iters", sp.iterations, "training iterations");
  swp->add_option("--batch", sp.batch_size, "batch size");
  swp->add_option("--lr", sp.lr0, "initial learning rate (cosine decay)");
  swp->add_option("--seed", sp.seed, "base seed");
  swp->add_option("--score-thr", swp_thr, "detection score threshold");
  swp->add_option("--out", swp_out, "output directory");
  swp->add_flag("--dry-run", swp_dry, "echo resolved config and exit");
  swp->set_config("--config");

  // ---- eval ----
  auto* evl = app.add_subcommand("eval", "evaluate a model + embeddings on a split");
  std::string evl_model = "model.eadk", evl_emb = "base", evl_data = "data",
              evl_split = "novel_test", evl_out;
  int evl_T = 4;
  double evl_thr = 0.05;
  evl->add_option("--model", evl_model, "pretrained model checkpoint");
  evl->add_option("--embeddings", evl_emb,
                  "table checkpoint, 'base', or 'random:SEED' (zero-shot proxy)");
  evl->add_option("--data", evl_data, "dataset root");
  evl->add_option("--split", evl_split, "split name");
  evl->add_option("--embeddings-per-class", evl_T, "T for random tables");
  evl->add_option("--score-thr", evl_thr, "detection score threshold");
  evl->add_option("--out", evl_out, "summary CSV path");
  evl->set_config("--config");

  // ---- predict ----
  auto* prd = app.add_subcommand("predict", "render detections for one image");
  std::string prd_model = "model.eadk", prd_emb = "base", prd_image,
              prd_out = "prediction.ppm", prd_json;
  int prd_T = 4;
  double prd_thr = 0.25;
  prd->add_option("--model", prd_model, "pretrained model checkpoint");
  prd->add_option("--embeddings", prd_emb, "table checkpoint, 'base', or 'random:SEED'");
  prd->add_option("--image", prd_image, "input PPM")->required();
  prd->add_option("--out", prd_out, "annotated output PPM");
  prd->add_option("--json", prd_json, "detections JSON (default: <out>.json)");
  prd->add_option("--score-thr", prd_thr, "detection score threshold");
  prd->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  if (gen->parsed()) {
    if (gen_scenes >= 0) {
      gp.base_train_scenes = gen_scenes;
      gp.novel_train_scenes = gen_scenes;
    }
    echo_config({{"command", "gen-data"},
                 {"out", gen_out},
                 {"seed", std::to_string(gen_seed)},
                 {"occlusion", fmt(gp.occlusion)},
                 {"max_objects", std::to_string(gp.max_objects)},
                 {"base_train_scenes", std::to_string(gp.base_train_scenes)},
                 {"novel_train_scenes", std::to_string(gp.novel_train_scenes)}},
                (fs::path(gen_out) / "run_config.txt").string());
    CHECK(eadk_gen_data(gen_out.c_str(), gen_seed, &gp));
    for (const char* split : {"base_train", "base_val", "novel_train", "novel_test"}) {
      eadk_split_stats st;
      CHECK(eadk_split_stats_read((fs::path(gen_out) / split).string().c_str(), &st));
      std::cout << split << ": " << st.images << " images, " << st.annotations
                << " annotations, " << st.categories << " categories\n";
    }
    return 0;
  }

  if (pre->parsed()) {
    pp.augment = pre_no_augment ? 0 : 1;
    ConfigKv kv{{"command", "pretrain"},
                {"data", pre_data},
                {"train_split", pre_split},
                {"val_split", pre_val},
                {"iterations", std::to_string(pp.iterations)},
                {"batch_size", std::to_string(pp.batch_size)},
                {"lr0", fmt(pp.lr0)},
                {"schedule", "cosine"},
                {"optimizer", "adamw"},
                {"weight_decay", fmt(pp.weight_decay)},
                {"embeddings_per_class", std::to_string(pp.embeddings_per_class)},
                {"augment", std::to_string(pp.augment)},
                {"seed", std::to_string(pp.seed)},
                {"out", pre_out}};
    echo_config(kv, pre_out + ".run_config.txt");
    if (pre_dry) return 0;
    const std::string loss_csv =
        pre_loss_csv.empty() ? pre_out + ".loss.csv" : pre_loss_csv;
    CHECK(eadk_pretrain((fs::path(pre_data) / pre_split).string().c_str(),
                        pre_out.c_str(), loss_csv.c_str(), &pp));
    eadk_model* model = nullptr;
    eadk_table* base = nullptr;
    eadk_eval_summary s;
    CHECK(eadk_model_open(pre_out.c_str(), &model));
    CHECK(eadk_table_base(model, &base));
    CHECK(eadk_evaluate(model, base, (fs::path(pre_data) / pre_val).string().c_str(),
                        0.05, &s));
    std::cout << "base-val mAP@50 = " << fmt(s.map_50)
              << "  mAP@75 = " << fmt(s.map_75)
              << "  mAP@50:95 = " << fmt(s.map_5095) << "\n";
    eadk_table_close(base);
    eadk_model_close(model);
    return 0;
  }

  if (ada->parsed()) {
    ap.augment = ada_no_augment ? 0 : 1;
    std::vector<int> t_values = parse_int_list(ada_T);
    ConfigKv kv{{"command", "adapt"},
                {"model", ada_model},
                {"data", ada_data},
                {"train_split", ada_train},
                {"test_split", ada_test},
                {"shots", std::to_string(ada_shots)},
                {"runs", std::to_string(ada_runs)},
                {"embeddings_per_class", ada_T},
                {"iterations", std::to_string(ap.iterations)},
                {"batch_size", std::to_string(ap.batch_size)},
                {"lr0", fmt(ap.lr0)},
                {"schedule", "cosine"},
                {"optimizer", "adamw"},
                {"weight_decay", fmt(ap.weight_decay)},
                {"sigma_init", fmt(ap.sigma_init)},
                {"augment", std::to_string(ap.augment)},
                {"seed", std::to_string(ap.seed)},
                {"score_thr", fmt(ada_thr)},
                {"out", ada_out}};
    echo_config(kv, (fs::path(ada_out) / "run_config.txt").string());
    if (ada_dry) return 0;
    fs::create_directories(ada_out);

    const std::string train_dir = (fs::path(ada_data) / ada_train).string();
    const std::string test_dir = (fs::path(ada_data) / ada_test).string();
    std::vector<std::function<RunResult()>> cells;
    for (int T : t_values)
      for (int r = 0; r < ada_runs; ++r) {
        const uint64_t run_seed = ap.seed + static_cast<uint64_t>(r);
        std::ostringstream emb, csv;
        emb << "embeddings_shots" << ada_shots << "_T" << T << "_run" << r << ".eadk";
        csv << "metrics_shots" << ada_shots << "_T" << T << "_run" << r << ".csv";
        const std::string emb_path = (fs::path(ada_out) / emb.str()).string();
        const std::string csv_path = (fs::path(ada_out) / csv.str()).string();
        cells.push_back([=] {
          return run_cell(ada_model, train_dir, test_dir, ap, ada_shots, T,
                          run_seed, ada_thr, csv_path, emb_path);
        });
      }
    std::vector<RunResult> results = run_cells(cells);
    for (const RunResult& r : results)
      if (r.status != EADK_OK) {
        std::cerr << "error: " << r.error << "\n";
        return static_cast<int>(r.status);
      }

    write_results_csv((fs::path(ada_out) / "results.csv").string(), ada_test,
                      results);
    std::ofstream agg((fs::path(ada_out) / "aggregate.csv").string());
    agg << "metric,mean,std,n_runs\n";
    for (int T : t_values) {
      std::vector<double> m5095, m50, m75;
      for (const RunResult& r : results)
        if (r.T == T) {
          m5095.push_back(r.summary.map_5095);
          m50.push_back(r.summary.map_50);
          m75.push_back(r.summary.map_75);
        }
      const std::string tag = "_shots" + std::to_string(ada_shots) + "_T" + std::to_string(T);
      append_aggregate(agg, "map_5095" + tag, m5095);
      append_aggregate(agg, "map_50" + tag, m50);
      append_aggregate(agg, "map_75" + tag, m75);
      Stats s = mean_std(m50);
      std::cout << "shots=" << ada_shots << " T=" << T << " mAP@50 = "
                << fmt(s.mean) << " +/- " << fmt(s.stddev) << " over "
                << m50.size() << " runs\n";
    }
    return 0;
  }

  if (swp->parsed()) {
    std::vector<int> shot_values = parse_int_list(swp_shots);
    std::sort(shot_values.begin(), shot_values.end());
    ConfigKv kv{{"command", "sweep"},
                {"model", swp_model},
                {"data", swp_data},
                {"shots", swp_shots},
                {"runs", std::to_string(swp_runs)},
                {"embeddings_per_class", std::to_string(swp_T)},
                {"iterations", std::to_string(sp.iterations)},
                {"batch_size", std::to_string(sp.batch_size)},
                {"lr0", fmt(sp.lr0)},
                {"seed", std::to_string(sp.seed)},
                {"out", swp_out}};
    echo_config(kv, (fs::path(swp_out) / "run_config.txt").string());
    if (swp_dry) return 0;
    fs::create_directories(swp_out);

    const std::string train_dir = (fs::path(swp_data) / swp_train).string();
    const std::string test_dir = (fs::path(swp_data) / swp_test).string();
    std::vector<std::function<RunResult()>> cells;
    for (int shots : shot_values)
      for (int r = 0; r < swp_runs; ++r) {
        const uint64_t run_seed = sp.seed + static_cast<uint64_t>(r);
        cells.push_back([=] {
          return run_cell(swp_model, train_dir, test_dir, sp, shots, swp_T,
                          run_seed, swp_thr, "", "");
        });
      }
    std::vector<RunResult> results = run_cells(cells);
    for (const RunResult& r : results)
      if (r.status != EADK_OK) {
        std::cerr << "error: " << r.error << "\n";
        return static_cast<int>(r.status);
      }

    write_results_csv((fs::path(swp_out) / "results.csv").string(), swp_test,
                      results);
    std::vector<SweepRow> rows;
    std::ofstream os((fs::path(swp_out) / "sweep.csv").string());
    os << "shots,map_5095_mean,map_5095_std,map_50_mean,map_50_std,map_75_mean,"
          "map_75_std\n";
    for (int shots : shot_values) {
      std::vector<double> m5095, m50, m75;
      for (const RunResult& r : results)
        if (r.shots == shots) {
          m5095.push_back(r.summary.map_5095);
          m50.push_back(r.summary.map_50);
          m75.push_back(r.summary.map_75);
        }
      SweepRow row{shots, mean_std(m5095), mean_std(m50), mean_std(m75)};
      rows.push_back(row);
      os << shots << "," << fmt(row.m5095.mean) << "," << fmt(row.m5095.stddev)
         << "," << fmt(row.m50.mean) << "," << fmt(row.m50.stddev) << ","
         << fmt(row.m75.mean) << "," << fmt(row.m75.stddev) << "\n";
      std::cout << "shots=" << shots << " mAP@50 = " << fmt(row.m50.mean)
                << " +/- " << fmt(row.m50.stddev) << "\n";
    }
    write_sweep_svg((fs::path(swp_out) / "sweep.svg").string(), rows);
    return 0;
  }

  if (evl->parsed()) {
    eadk_model* model = nullptr;
    eadk_table* table = nullptr;
    eadk_eval_summary s;
    CHECK(eadk_model_open(evl_model.c_str(), &model));
    eadk_split_stats st;
    const std::string split_dir = (fs::path(evl_data) / evl_split).string();
    CHECK(eadk_split_stats_read(split_dir.c_str(), &st));
    CHECK(open_embeddings(evl_emb, model, st.categories, evl_T, &table));
    CHECK(eadk_evaluate(model, table, split_dir.c_str(), evl_thr, &s));
    std::cout << "split=" << evl_split << " mAP@50:95 = " << fmt(s.map_5095)
              << "  mAP@50 = " << fmt(s.map_50) << "  mAP@75 = " << fmt(s.map_75)
              << "  (" << s.n_detections << " detections / " << s.n_ground_truth
              << " ground truth)\n";
    if (!evl_out.empty()) {
      std::ofstream os(evl_out);
      os << "split,shots,run_seed,map_5095,map_50,map_75\n";
      os << evl_split << ",0,0," << fmt(s.map_5095) << "," << fmt(s.map_50)
         << "," << fmt(s.map_75) << "\n";
    }
    eadk_table_close(table);
    eadk_model_close(model);
    return 0;
  }

  if (prd->parsed()) {
    if (prd_json.empty()) prd_json = prd_out + ".json";
    eadk_model* model = nullptr;
    eadk_table* table = nullptr;
    CHECK(eadk_model_open(prd_model.c_str(), &model));
    CHECK(open_embeddings(prd_emb, model, 2, prd_T, &table));
    CHECK(eadk_predict(model, table, prd_image.c_str(), prd_out.c_str(),
                       prd_json.c_str(), prd_thr));
    std::cout << "wrote " << prd_out << " and " << prd_json << "\n";
    eadk_table_close(table);
    eadk_model_close(model);
    return 0;
  }

  return 1;
}
