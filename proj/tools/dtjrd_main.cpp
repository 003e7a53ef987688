// dtjrd: command-line front end for the JRD prediction and coding pipeline.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dtjrd/bjontegaard.hpp"
#include "dtjrd/checkpoint.hpp"
#include "dtjrd/dataset.hpp"
#include "dtjrd/detection.hpp"
#include "dtjrd/errors.hpp"
#include "dtjrd/labels.hpp"
#include "dtjrd/metrics.hpp"
#include "dtjrd/trainer.hpp"
#include "dtjrd/vcm.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dtjrd;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Tracks the artifacts of one invocation so they can be removed on failure
// and listed in the run manifest.
class Run {
 public:
  explicit Run(std::string subcommand) { manifest_["subcommand"] = std::move(subcommand); }

  void flag(const std::string& name, json value) { manifest_["flags"][name] = std::move(value); }
  void seed(std::uint64_t s) { manifest_["seed"] = s; }
  void note(const std::string& key, json value) { manifest_["notes"][key] = std::move(value); }

  // Registers an output path before it is written.
  const fs::path& output(const fs::path& p) {
    if (!fs::exists(p)) created_.push_back(p);
    outputs_.push_back(p);
    return p;
  }
  void set_manifest_path(fs::path p) { manifest_path_ = std::move(p); }

  void commit() {
    manifest_["tool_version"] = kToolVersion;
    if (!manifest_.contains("seed")) manifest_["seed"] = nullptr;
    json outs = json::array();
    for (const auto& p : outputs_) outs.push_back(p.generic_string());
    manifest_["outputs"] = outs;
    // devices and pipes are written in place, never renamed over
    if (fs::exists(manifest_path_) && !fs::is_regular_file(manifest_path_)) {
      std::ofstream out(manifest_path_);
      out << manifest_.dump(2) << '\n';
      if (!out) throw IoError("cannot write run manifest " + manifest_path_.string());
      return;
    }
    const fs::path tmp = manifest_path_.string() + ".partial";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << manifest_.dump(2) << '\n';
      if (!out) throw IoError("cannot write run manifest " + manifest_path_.string());
    }
    fs::rename(tmp, manifest_path_);
  }

  void rollback() noexcept {
    std::error_code ec;
    for (auto it = created_.rbegin(); it != created_.rend(); ++it) fs::remove_all(*it, ec);
    fs::remove(manifest_path_.string() + ".partial", ec);
  }

 private:
  json manifest_ = json::object();
  std::vector<fs::path> outputs_;
  std::vector<fs::path> created_;
  fs::path manifest_path_;
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw ConfigError("expected a comma-separated integer list, got '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const fs::path& path) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

Csv read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  csv.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != csv.header.size()) throw FormatError(path.string() + ": ragged row '" + line + "'");
    csv.rows.push_back(std::move(cells));
  }
  return csv;
}

int parse_int_cell(const std::string& s, const fs::path& path) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw FormatError(path.string() + ": '" + s + "' is not an integer");
  return v;
}

// object_id -> (source_image_id, jrd) from a predictions CSV or a manifest.
struct LabelTable {
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::string, int>> by_object;
};

LabelTable read_labels(const fs::path& path) {
  LabelTable t;
  if (path.extension() == ".jsonl") {
    for (const auto& r : load_manifest(path)) {
      t.order.push_back(r.object_id);
      t.by_object[r.object_id] = {r.source_image_id, r.jrd};
    }
    return t;
  }
  const Csv csv = read_csv(path);
  const auto c_obj = csv.column("object_id", path);
  const auto c_jrd = csv.column("jrd", path);
  const auto img_it = std::find(csv.header.begin(), csv.header.end(), "source_image_id");
  for (const auto& row : csv.rows) {
    const std::string img = img_it == csv.header.end() ? std::string() : row[img_it - csv.header.begin()];
    if (!t.by_object.emplace(row[c_obj], std::make_pair(img, parse_int_cell(row[c_jrd], path))).second) {
      throw FormatError(path.string() + ": duplicate object_id '" + row[c_obj] + "'");
    }
    t.order.push_back(row[c_obj]);
  }
  return t;
}

std::vector<ObjectRecord> records_for(const fs::path& manifest, const std::string& splits, const std::string& split) {
  auto records = load_manifest(manifest);
  if (split == "all") return records;
  if (splits.empty()) throw ConfigError("--split " + split + " needs --splits");
  return select_split(records, load_splits(splits), parse_split(split));
}

std::vector<Example> make_examples(const std::vector<ObjectRecord>& records, const fs::path& manifest_dir,
                                   std::size_t size, const Normalization& norm) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({preprocess(r, manifest_dir, size, norm), r.jrd, r.object_id, r.source_image_id});
  }
  return out;
}

int threads_from_env() {
  const char* v = std::getenv("DTJRD_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 0 || n > 1024) throw ConfigError(std::string("DTJRD_THREADS must be an integer >= 0, got '") + v + "'");
  return static_cast<int>(n);
}

void write_predictions(const std::vector<ObjectRecord>& records, const std::vector<int>& pred, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "object_id,source_image_id,jrd\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << records[i].object_id << ',' << records[i].source_image_id << ',' << pred[i] << '\n';
  }
  if (!out) throw IoError("short write on " + path.string());
}

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

fs::path default_manifest(const fs::path& out, const std::string& sub) {
  return out.empty() ? fs::path("dtjrd-" + sub + ".run.json") : fs::path(out.string() + ".run.json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-level JRD prediction and machine-oriented QP-map coding"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", kToolVersion);

  // synth-data
  std::size_t synth_n = 300;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic texture dataset");
  synth->add_option("--n", synth_n, "Number of objects")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--out-dir", synth_out, "Output directory")->required();

  // make-splits
  std::string splits_manifest, splits_out, splits_ratios = "8,1,1";
  std::uint64_t splits_seed = 0;
  auto* msplits = app.add_subcommand("make-splits", "Group-aware train/val/test split by source image");
  msplits->add_option("--manifest", splits_manifest)->required()->check(CLI::ExistingFile);
  msplits->add_option("--seed", splits_seed);
  msplits->add_option("--ratios", splits_ratios, "train,val,test weights");
  msplits->add_option("--out", splits_out, "Splits CSV (default: splits.csv next to the manifest)");

  // labels
  int lab_mu = 30, lab_n = 64;
  double lab_sigma = 3.0, lab_eps = 0.9;
  std::string lab_kind = "gaussian", lab_out;
  auto* labels = app.add_subcommand("labels", "Print a label distribution as CSV");
  labels->add_option("--mu", lab_mu)->required();
  labels->add_option("--sigma", lab_sigma);
  labels->add_option("--n", lab_n);
  labels->add_option("--kind", lab_kind, "gaussian | smooth | one_hot");
  labels->add_option("--eps", lab_eps, "Peak mass for smooth labels");
  labels->add_option("--out", lab_out, "Write CSV here instead of stdout");

  // train
  std::string tr_manifest, tr_splits, tr_split = "train", tr_val_split = "val", tr_strategy = "daft",
                                      tr_label_kind = "gaussian", tr_config = "toy", tr_out, tr_init, tr_log;
  double tr_sigma = 3.0, tr_eps = 0.9, tr_lr0 = 0.01;
  std::size_t tr_epochs = 10, tr_batch = 32;
  std::uint64_t tr_seed = 0;
  auto* train = app.add_subcommand("train", "Train the JRD predictor");
  train->add_option("--manifest", tr_manifest)->required()->check(CLI::ExistingFile);
  train->add_option("--splits", tr_splits)->check(CLI::ExistingFile);
  train->add_option("--split", tr_split, "Training split (train|val|test|all)");
  train->add_option("--val-split", tr_val_split, "Model-selection split, or 'none'");
  train->add_option("--strategy", tr_strategy, "lp | ff | daft");
  train->add_option("--label-kind", tr_label_kind, "gaussian | smooth | one_hot");
  train->add_option("--sigma", tr_sigma);
  train->add_option("--eps", tr_eps);
  train->add_option("--epochs", tr_epochs);
  train->add_option("--batch-size", tr_batch)->check(CLI::PositiveNumber);
  train->add_option("--lr0", tr_lr0);
  train->add_option("--seed", tr_seed);
  train->add_option("--config", tr_config, "toy | full")->check(CLI::IsMember({"toy", "full"}));
  train->add_option("--init-checkpoint", tr_init, "Start from these weights")->check(CLI::ExistingFile);
  train->add_option("--checkpoint-out", tr_out)->required();
  train->add_option("--log-csv", tr_log, "Epoch log (default: <checkpoint-out>.log.csv)");

  // predict
  std::string pr_ckpt, pr_manifest, pr_splits, pr_split = "all", pr_out;
  auto* predict = app.add_subcommand("predict", "Predict per-object JRD");
  predict->add_option("--checkpoint", pr_ckpt)->required()->check(CLI::ExistingFile);
  predict->add_option("--manifest", pr_manifest)->required()->check(CLI::ExistingFile);
  predict->add_option("--splits", pr_splits)->check(CLI::ExistingFile);
  predict->add_option("--split", pr_split);
  predict->add_option("--out", pr_out, "Predictions CSV")->required();

  // qpmap
  int qm_w = 0, qm_h = 0, qm_delta = 0, qm_qpb = 37;
  std::string qm_bboxes, qm_jrd, qm_out;
  auto* qpmap = app.add_subcommand("qpmap", "Build a CTU QP map from boxes and JRDs");
  qpmap->add_option("--width", qm_w)->required()->check(CLI::PositiveNumber);
  qpmap->add_option("--height", qm_h)->required()->check(CLI::PositiveNumber);
  qpmap->add_option("--bboxes", qm_bboxes, "JSON list of {object_id, bbox:[x0,y0,x1,y1]}")->required()->check(CLI::ExistingFile);
  qpmap->add_option("--jrd", qm_jrd, "CSV with object_id,jrd")->required()->check(CLI::ExistingFile);
  qpmap->add_option("--delta-qp", qm_delta);
  qpmap->add_option("--qp-b", qm_qpb);
  qpmap->add_option("--out", qm_out, "QP-map sidecar")->required();

  // proxy-encode
  std::string pe_image, pe_qpmap, pe_recon, pe_codec = "proxy", pe_cmd;
  auto* pencode = app.add_subcommand("proxy-encode", "Encode one image under a QP map");
  pencode->add_option("--image", pe_image)->required()->check(CLI::ExistingFile);
  pencode->add_option("--qpmap", pe_qpmap)->required()->check(CLI::ExistingFile);
  pencode->add_option("--recon-out", pe_recon, "Reconstruction PNG")->required();
  pencode->add_option("--codec", pe_codec)->check(CLI::IsMember({"proxy", "external"}));
  pencode->add_option("--encoder-cmd", pe_cmd, "Template with {input} {qpmap} {output} [{bits}]");

  // metrics
  std::string me_pred, me_gt, me_out;
  auto* metrics = app.add_subcommand("metrics", "JRD prediction errors");
  metrics->add_option("--pred", me_pred, "Predictions CSV")->required()->check(CLI::ExistingFile);
  metrics->add_option("--gt", me_gt, "Ground-truth CSV or manifest (.jsonl)")->required()->check(CLI::ExistingFile);
  metrics->add_option("--out", me_out, "Also write a JSON report");

  // map
  std::string map_dets, map_gt, map_out;
  double map_thr = 0.5;
  auto* mapcmd = app.add_subcommand("map", "Mean average precision");
  mapcmd->add_option("--dets", map_dets)->required()->check(CLI::ExistingFile);
  mapcmd->add_option("--gt", map_gt)->required()->check(CLI::ExistingFile);
  mapcmd->add_option("--iou", map_thr)->check(CLI::Range(0.0, 1.0));
  mapcmd->add_option("--out", map_out, "Also write a JSON report");

  // bdrate
  std::string bd_anchor, bd_test, bd_out;
  auto* bdrate = app.add_subcommand("bdrate", "Bjontegaard delta between two curves");
  bdrate->add_option("anchor", bd_anchor, "Anchor curve CSV")->required()->check(CLI::ExistingFile);
  bdrate->add_option("test", bd_test, "Test curve CSV")->required()->check(CLI::ExistingFile);
  bdrate->add_option("--out", bd_out, "Also write a JSON report");

  // curve
  std::string cu_manifest, cu_ckpt, cu_splits, cu_split = "all", cu_out, cu_deltas = "-4,-3,-2,-1,0",
                                                cu_bases = "25,27,29,31,33", cu_codec = "proxy", cu_cmd;
  bool cu_gt = false, cu_save_recon = false;
  int cu_offset = 0;
  auto* curve = app.add_subcommand("curve", "Rate-accuracy sweep over base QPs and QP offsets");
  curve->add_option("--manifest", cu_manifest)->required()->check(CLI::ExistingFile);
  auto* ck = curve->add_option("--checkpoint", cu_ckpt, "Predict JRDs with this model")->check(CLI::ExistingFile);
  auto* gt = curve->add_flag("--use-gt", cu_gt, "Use manifest JRDs instead of a model");
  ck->excludes(gt);
  curve->add_option("--splits", cu_splits)->check(CLI::ExistingFile);
  curve->add_option("--split", cu_split);
  curve->add_option("--delta-qps", cu_deltas);
  curve->add_option("--base-qps", cu_bases);
  curve->add_option("--jrd-offset", cu_offset, "Added to every JRD before QP assignment");
  curve->add_option("--codec", cu_codec)->check(CLI::IsMember({"proxy", "external"}));
  curve->add_option("--encoder-cmd", cu_cmd);
  curve->add_flag("--save-recon", cu_save_recon, "Keep reconstructions and QP maps per setting");
  curve->add_option("--out-dir", cu_out)->required();

  std::string run_manifest;
  for (auto* sub : app.get_subcommands({})) {
    sub->add_option("--run-manifest", run_manifest, "Where to write the run manifest");
  }

  CLI11_PARSE(app, argc, argv);

  CLI::App* active = app.get_subcommands().front();
  Run run(active->get_name());
  for (const auto* opt : active->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "--run-manifest") continue;
    const auto& res = opt->results();
    const std::string name = opt->get_single_name();
    if (opt->count() > 0) {
      run.flag(name, res.size() == 1 ? json(res.front()) : json(res));
    } else if (!opt->get_default_str().empty()) {
      run.flag(name, opt->get_default_str());
    }
  }

  int status = 0;
  try {
    if (*synth) {
      run.seed(synth_seed);
      run.set_manifest_path(run_manifest.empty() ? fs::path(synth_out) / "run.json" : fs::path(run_manifest));
      run.output(synth_out);
      fs::create_directories(synth_out);
      const auto result = synth_dataset(synth_n, synth_seed, synth_out);
      run.output(fs::path(synth_out) / "images");
      run.output(result.manifest_path);
      run.output(fs::path(synth_out) / "synth_params.csv");
      std::cout << "wrote " << result.records.size() << " objects to " << result.manifest_path.string() << '\n';
    } else if (*msplits) {
      run.seed(splits_seed);
      const auto ratios = parse_int_list(splits_ratios);
      if (ratios.size() != 3) throw ConfigError("--ratios needs three values");
      const fs::path out =
          splits_out.empty() ? fs::path(splits_manifest).parent_path() / "splits.csv" : fs::path(splits_out);
      run.set_manifest_path(run_manifest.empty() ? default_manifest(out, "") : fs::path(run_manifest));
      const auto records = load_manifest(splits_manifest);
      const auto splits = group_split(records, {ratios[0], ratios[1], ratios[2]}, splits_seed);
      save_splits(splits, run.output(out));
      std::map<Split, std::size_t> counts;
      for (const auto& r : records) ++counts[splits.at(r.source_image_id)];
      std::cout << "train " << counts[Split::kTrain] << ", val " << counts[Split::kVal] << ", test "
                << counts[Split::kTest] << " objects\n";
    } else if (*labels) {
      LabelSpec spec;
      spec.kind = parse_label_kind(lab_kind);
      spec.sigma = lab_sigma;
      spec.eps = lab_eps;
      const auto dist = make_labels(spec, lab_mu, lab_n);
      std::ostringstream csv;
      csv << "x,probability\n" << std::setprecision(17);
      for (int x = 0; x < lab_n; ++x) csv << x << ',' << dist.probs[static_cast<std::size_t>(x)] << '\n';
      run.set_manifest_path(run_manifest.empty() ? default_manifest(lab_out, "labels") : fs::path(run_manifest));
      if (lab_out.empty()) {
        std::cout << csv.str();
      } else {
        std::ofstream out(run.output(lab_out), std::ios::trunc);
        out << csv.str();
        if (!out) throw IoError("cannot write " + lab_out);
      }
    } else if (*train) {
      run.seed(tr_seed);
      run.set_manifest_path(run_manifest.empty() ? default_manifest(tr_out, "") : fs::path(run_manifest));
      const fs::path manifest_dir = fs::path(tr_manifest).parent_path();
      const auto train_records = records_for(tr_manifest, tr_splits, tr_split);
      std::vector<ObjectRecord> val_records;
      if (tr_val_split != "none") val_records = records_for(tr_manifest, tr_splits, tr_val_split);

      ModelConfig cfg = tr_config == "full" ? ModelConfig::vit_large_384() : ModelConfig::toy();
      Model<float> model = tr_init.empty() ? Model<float>(cfg, tr_seed) : load_checkpoint<float>(tr_init, cfg);
      const Normalization norm = tr_init.empty() ? Normalization{} : read_checkpoint_header(tr_init).normalization;

      TrainConfig tc;
      tc.strategy = parse_strategy(tr_strategy);
      tc.labels.kind = parse_label_kind(tr_label_kind);
      tc.labels.sigma = tr_sigma;
      tc.labels.eps = tr_eps;
      tc.lr0 = tr_lr0;
      tc.batch_size = tr_batch;
      tc.epochs = tr_epochs;
      tc.seed = tr_seed;
      const auto train_set = make_examples(train_records, manifest_dir, cfg.image_size, norm);
      const auto val_set = make_examples(val_records, manifest_dir, cfg.image_size, norm);
      auto result = fit(std::move(model), train_set, val_set, tc, [](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << " loss " << fixed(e.train_loss, 5) << " val_EA " << fixed(e.val_ea, 3)
                  << " lr " << fixed(e.lr, 6) << '\n'
                  << std::flush;
      });
      save_checkpoint(result.model, run.output(tr_out), norm);
      const fs::path log = tr_log.empty() ? fs::path(tr_out + ".log.csv") : fs::path(tr_log);
      save_epoch_log_csv(result.log, run.output(log));
      run.note("best_epoch", result.best_epoch);
      std::cout << "best epoch " << result.best_epoch << ", checkpoint " << tr_out << '\n';
    } else if (*predict) {
      run.set_manifest_path(run_manifest.empty() ? default_manifest(pr_out, "") : fs::path(run_manifest));
      const auto header = read_checkpoint_header(pr_ckpt);
      const auto model = load_checkpoint<float>(pr_ckpt);
      const auto records = records_for(pr_manifest, pr_splits, pr_split);
      const auto examples =
          make_examples(records, fs::path(pr_manifest).parent_path(), header.config.image_size, header.normalization);
      const auto pred = predict_examples(model, examples);
      write_predictions(records, pred, run.output(pr_out));
      std::cout << "wrote " << pred.size() << " predictions to " << pr_out << '\n';
    } else if (*qpmap) {
      run.set_manifest_path(run_manifest.empty() ? default_manifest(qm_out, "") : fs::path(run_manifest));
      std::ifstream in(qm_bboxes);
      const auto doc = json::parse(in, nullptr, false);
      if (doc.is_discarded() || !doc.is_array()) throw FormatError(qm_bboxes + ": expected a JSON array");
      const auto table = read_labels(qm_jrd);
      std::vector<Box> boxes;
      std::vector<int> jrd;
      for (const auto& item : doc) {
        const auto id = item.at("object_id").get<std::string>();
        const auto b = item.at("bbox").get<std::vector<double>>();
        if (b.size() != 4) throw FormatError(qm_bboxes + ": bbox of " + id + " needs 4 numbers");
        auto it = table.by_object.find(id);
        if (it == table.by_object.end()) throw ValidationError("no JRD for object '" + id + "' in " + qm_jrd);
        boxes.push_back({b[0], b[1], b[2], b[3]});
        jrd.push_back(it->second.second);
      }
      const auto grid = classify_ctus(qm_w, qm_h, boxes);
      const auto assignment = assign_qps(grid, jrd, qm_delta, qm_qpb);
      for (const auto& w : assignment.warnings) std::cerr << "warning: " << w << '\n';
      run.note("qp_b", assignment.qp_b);
      run.note("warnings", assignment.warnings);
      save_qpmap(assignment.map, run.output(qm_out));
    } else if (*pencode) {
      run.set_manifest_path(run_manifest.empty() ? default_manifest(pe_recon, "") : fs::path(run_manifest));
      const Image image = load_image(pe_image);
      const QpMap map = load_qpmap(pe_qpmap);
      std::unique_ptr<CodecAdapter> codec;
      if (pe_codec == "external") {
        if (pe_cmd.empty()) throw ConfigError("--codec external needs --encoder-cmd");
        codec = std::make_unique<ExternalCodec>(pe_cmd);
      } else {
        codec = std::make_unique<ProxyCodec>();
      }
      const auto coded = codec->encode(image, map);
      save_png(coded.reconstruction, run.output(pe_recon));
      const double bpp = static_cast<double>(coded.bits) / (static_cast<double>(image.width) * image.height);
      run.note("bits", coded.bits);
      std::cout << "bits " << coded.bits << "\nbpp " << fixed(bpp, 6) << '\n';
    } else if (*metrics) {
      run.set_manifest_path(run_manifest.empty() ? default_manifest(me_out, "metrics") : fs::path(run_manifest));
      const auto pred = read_labels(me_pred);
      const auto gt_table = read_labels(me_gt);
      std::vector<int> p, g;
      std::vector<std::string> groups;
      for (const auto& id : gt_table.order) {
        auto it = pred.by_object.find(id);
        if (it == pred.by_object.end()) throw ValidationError("no prediction for object '" + id + "'");
        const auto& [img, jrd] = gt_table.by_object.at(id);
        if (img.empty()) throw FormatError(me_gt + ": ground truth needs a source_image_id column");
        p.push_back(it->second.second);
        g.push_back(jrd);
        groups.push_back(img);
      }
      if (pred.by_object.size() != gt_table.by_object.size()) {
        throw ValidationError("predictions and ground truth cover different objects");
      }
      const double ea = mae_EA(p, g, groups);
      std::optional<double> er;
      try {
        er = mae_range(p, g);
      } catch (const ContractError&) {
        // no ground truth inside the range
      }
      std::cout << "E_A " << fixed(ea, 4) << "\nE_[27,51] " << (er ? fixed(*er, 4) : std::string("n/a")) << '\n';
      if (!me_out.empty()) {
        json rep = {{"E_A", ea}, {"E_27_51", er ? json(*er) : json(nullptr)}, {"objects", p.size()}};
        std::ofstream(run.output(me_out), std::ios::trunc) << rep.dump(2) << '\n';
      }
    } else if (*mapcmd) {
      run.set_manifest_path(run_manifest.empty() ? default_manifest(map_out, "map") : fs::path(run_manifest));
      const auto dets = load_detections(map_dets, true);
      const auto gts = load_detections(map_gt, false);
      const double m = map_at_iou(dets, gts, map_thr);
      std::cout << "mAP@" << map_thr << ' ' << fixed(m, 2) << '\n';
      if (!map_out.empty()) {
        json rep = {{"iou", map_thr}, {"mAP", m}};
        std::ofstream(run.output(map_out), std::ios::trunc) << rep.dump(2) << '\n';
      }
    } else if (*bdrate) {
      run.set_manifest_path(run_manifest.empty() ? default_manifest(bd_out, "bdrate") : fs::path(run_manifest));
      const auto anchor = load_curve_csv(bd_anchor);
      const auto test = load_curve_csv(bd_test);
      const auto rate = bd_rate(anchor, test);
      const auto metric = bd_metric(anchor, test);
      std::vector<std::string> warnings = rate.warnings;
      warnings.insert(warnings.end(), metric.warnings.begin(), metric.warnings.end());
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "BD-rate: " << fixed(rate.value, 2) << "%\nBD-metric: " << fixed(metric.value, 4) << '\n';
      run.note("method", kBjontegaardMethod);
      if (!bd_out.empty()) {
        json rep = {{"bd_rate_percent", rate.value}, {"bd_metric", metric.value}, {"method", kBjontegaardMethod},
                    {"warnings", warnings}};
        std::ofstream(run.output(bd_out), std::ios::trunc) << rep.dump(2) << '\n';
      }
    } else if (*curve) {
      if (cu_ckpt.empty() && !cu_gt) throw ConfigError("curve needs --checkpoint or --use-gt");
      const fs::path out_dir = cu_out;
      run.set_manifest_path(run_manifest.empty() ? out_dir / "run.json" : fs::path(run_manifest));
      run.output(out_dir);
      fs::create_directories(out_dir);
      const fs::path manifest_dir = fs::path(cu_manifest).parent_path();
      const auto records = records_for(cu_manifest, cu_splits, cu_split);
      if (records.empty()) throw ContractError("curve: the selected split has no objects");

      std::vector<int> jrd;
      if (cu_gt) {
        for (const auto& r : records) jrd.push_back(r.jrd);
      } else {
        const auto header = read_checkpoint_header(cu_ckpt);
        const auto model = load_checkpoint<float>(cu_ckpt);
        jrd = predict_examples(model, make_examples(records, manifest_dir, header.config.image_size, header.normalization));
      }
      for (auto& j : jrd) j = std::clamp(j + cu_offset, 0, kMaxJrd);
      write_predictions(records, jrd, run.output(out_dir / "jrd_used.csv"));

      std::vector<PipelineImage> images;
      std::map<std::string, std::size_t> index;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        auto [it, fresh] = index.emplace(r.source_image_id, images.size());
        if (fresh) images.push_back({r.source_image_id, resolve_image_path(manifest_dir, r), {}, {}, {}});
        auto& img = images[it->second];
        img.object_ids.push_back(r.object_id);
        img.boxes.push_back(r.bbox);
        img.jrd.push_back(jrd[i]);
      }

      std::unique_ptr<CodecAdapter> codec;
      if (cu_codec == "external") {
        if (cu_cmd.empty()) throw ConfigError("--codec external needs --encoder-cmd");
        codec = std::make_unique<ExternalCodec>(cu_cmd);
      } else {
        codec = std::make_unique<ProxyCodec>();
      }
      const auto bases = parse_int_list(cu_bases);
      const auto deltas = parse_int_list(cu_deltas);
      RateAccuracyOptions opts;
      opts.threads = threads_from_env();
      if (cu_save_recon) opts.output_dir = run.output(out_dir / "settings");
      const auto rows = run_rate_accuracy(images, bases, deltas, *codec, opts);

      save_settings_csv(rows, run.output(out_dir / "curve.csv"));
      std::vector<std::string> warnings;
      for (int b : bases) {
        RateAccuracyCurve c;
        for (const auto& r : rows) {
          if (r.base_qp == b) c.points.push_back({r.mean_bpp, r.object_psnr});
        }
        std::sort(c.points.begin(), c.points.end(), [](const RatePoint& a, const RatePoint& z) { return a.rate < z.rate; });
        save_curve_csv(c, run.output(out_dir / ("curve_qp" + std::to_string(b) + ".csv")));
      }
      for (const auto& r : rows) warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
      run.note("qp_composition", "qp_b = base_qp; object QP = clamp(min JRD + delta_qp, 0, 63); qp_b raised when below an object QP");
      run.note("metric", "psnr_on_object_ctus_db");
      run.note("rate", "proxy_bpp");
      run.note("codec", codec->name());
      run.note("threads", opts.threads);
      run.note("warnings", warnings);
      for (const auto& r : rows) {
        std::cout << "base " << r.base_qp << " delta " << r.delta_qp << " bpp " << fixed(r.mean_bpp, 5) << " psnr "
                  << fixed(r.object_psnr, 3) << '\n';
      }
      std::cerr << (warnings.empty() ? "" : "warning: background QP repairs in " + std::to_string(warnings.size()) +
                                                " image encodes (see run manifest)\n");
    }
    run.commit();
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    status = 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    status = 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    status = 1;
  }
  if (status != 0) run.rollback();
  return status;
}
