#include "mcbm/pipeline.hpp"
#include "mcbm/provenance.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>

namespace mcbm
{

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream)
{
  const std::uint64_t tag = fnv1a64(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::uint64_t RunConfig::data_seed() const { return derive_seed(seed, "data"); }
std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, "split"); }
std::uint64_t RunConfig::train_seed() const { return derive_seed(seed, "train"); }

void RunConfig::validate() const
{
  if (msl < 1)
    throw std::invalid_argument("config field 'msl': must be >= 1");
  if (mode == SourceMode::joint && calibration != CalibrationMethod::none)
    throw std::invalid_argument("config field 'calibration': joint mode uses uncalibrated probabilities; set it to none");
  if (mode == SourceMode::sequential && calibration == CalibrationMethod::none &&
      !(!probabilities_path.empty() && probabilities_calibrated))
    throw std::invalid_argument("config field 'calibration': seq mode needs calibrated probabilities");
  if (mode == SourceMode::joint && probabilities_calibrated)
    throw std::invalid_argument("config field 'probabilities_calibrated': joint probabilities are never calibrated");
  if (!synthetic && (csv_path.empty() || schema_path.empty()))
    throw std::invalid_argument("config field 'data': need either 'synthetic' or both 'csv' and 'schema'");
  if (synthetic)
    synthetic->validate();
  double total = 0;
  for (double f : split) {
    if (!(f >= 0))
      throw std::invalid_argument("config field 'split': fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("config field 'split': fractions must sum to 1");
  if (calibration != CalibrationMethod::none && !(split[1] > 0))
    throw std::invalid_argument("config field 'split': calibration needs a non-empty calibration split");
  train.validate();
  for (int m : sweep_msl)
    if (m < 1)
      throw std::invalid_argument("config field 'sweep.msl': values must be >= 1");
}

nlohmann::json RunConfig::to_json() const
{
  nlohmann::json data;
  if (synthetic) {
    const auto& s = *synthetic;
    data["synthetic"] = {{"n_samples", s.n_samples},
                         {"n_factors", s.n_factors},
                         {"bins_per_factor", s.bins_per_factor},
                         {"revealed", s.revealed},
                         {"feature_dim", s.feature_dim},
                         {"feature_noise_sigma", s.feature_noise_sigma},
                         {"concept_flip_prob", s.concept_flip_prob},
                         {"n_classes", s.n_classes}};
  } else {
    data["csv"] = csv_path.string();
    data["schema"] = schema_path.string();
  }
  if (!probabilities_path.empty()) {
    data["probabilities"] = probabilities_path.string();
    data["probabilities_calibrated"] = probabilities_calibrated;
  }
  return {{"data", data},
          {"split", split},
          {"train",
           {{"epochs", train.epochs},
            {"joint_epochs", train.joint_epochs},
            {"batch_size", train.batch_size},
            {"learning_rate", train.learning_rate},
            {"weight_decay", train.weight_decay},
            {"hidden", train.hidden},
            {"activation", train.activation == Activation::relu ? "relu" : "tanh"},
            {"warm_start", train.warm_start}}},
          {"msl", msl},
          {"mode", to_string(mode)},
          {"lambda_c", train.lambda_c},
          {"calibration", calibration == CalibrationMethod::none ? "none" : "platt-temp"},
          {"platt_corrected_targets", platt_corrected_targets},
          {"eval_concepts", eval_concepts == ConceptMode::annotated ? "annotated" : "predicted"},
          {"seed", seed},
          {"out", out_dir.string()},
          {"sweep", {{"levels", sweep_levels}, {"seeds", sweep_seeds}, {"msl", sweep_msl}}}};
}

std::string RunConfig::hash() const
{
  return to_hex(fnv1a64(to_json().dump()));
}

RunConfig RunConfig::from_json(const nlohmann::json& j)
{
  RunConfig cfg;
  auto field = [&](const char* name, auto fn) {
    if (!j.contains(name))
      return;
    try {
      fn(j.at(name));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("config field '") + name + "': " + e.what());
    }
  };
  field("data", [&](const nlohmann::json& d) {
    if (d.contains("synthetic")) {
      const auto& s = d["synthetic"];
      SynthSpec spec;
      spec.n_samples = s.value("n_samples", spec.n_samples);
      spec.n_factors = s.value("n_factors", spec.n_factors);
      spec.bins_per_factor = s.value("bins_per_factor", spec.bins_per_factor);
      spec.feature_dim = s.value("feature_dim", spec.feature_dim);
      spec.feature_noise_sigma = s.value("feature_noise_sigma", spec.feature_noise_sigma);
      spec.concept_flip_prob = s.value("concept_flip_prob", spec.concept_flip_prob);
      spec.n_classes = s.value("n_classes", spec.n_classes);
      if (s.contains("revealed")) {
        spec.revealed = s["revealed"].get<std::vector<int>>();
      } else {
        for (int g = 0; g < spec.n_factors; ++g)
          spec.revealed.push_back(g);
      }
      cfg.synthetic = spec;
    }
    cfg.csv_path = d.value("csv", std::string{});
    cfg.schema_path = d.value("schema", std::string{});
    cfg.probabilities_path = d.value("probabilities", std::string{});
    cfg.probabilities_calibrated = d.value("probabilities_calibrated", false);
  });
  field("split", [&](const nlohmann::json& v) { cfg.split = v.get<std::array<double, 3>>(); });
  field("train", [&](const nlohmann::json& t) {
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.joint_epochs = t.value("joint_epochs", cfg.train.joint_epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
    cfg.train.hidden = t.value("hidden", cfg.train.hidden);
    const std::string act = t.value("activation", std::string("relu"));
    if (act != "relu" && act != "tanh")
      throw std::invalid_argument("config field 'train.activation': expected relu or tanh");
    cfg.train.activation = act == "tanh" ? Activation::tanh : Activation::relu;
    cfg.train.warm_start = t.value("warm_start", cfg.train.warm_start);
  });
  field("msl", [&](const nlohmann::json& v) { cfg.msl = v.get<int>(); });
  field("mode", [&](const nlohmann::json& v) { cfg.mode = parse_source_mode(v.get<std::string>()); });
  field("lambda_c", [&](const nlohmann::json& v) { cfg.train.lambda_c = v.get<double>(); });
  field("calibration", [&](const nlohmann::json& v) {
    const auto s = v.get<std::string>();
    if (s != "none" && s != "platt-temp")
      throw std::invalid_argument("config field 'calibration': expected platt-temp or none");
    cfg.calibration = s == "none" ? CalibrationMethod::none : CalibrationMethod::platt_temperature;
  });
  field("platt_corrected_targets", [&](const nlohmann::json& v) { cfg.platt_corrected_targets = v.get<bool>(); });
  field("eval_concepts", [&](const nlohmann::json& v) {
    const auto s = v.get<std::string>();
    if (s != "predicted" && s != "annotated")
      throw std::invalid_argument("config field 'eval_concepts': expected predicted or annotated");
    cfg.eval_concepts = s == "annotated" ? ConceptMode::annotated : ConceptMode::predicted;
  });
  field("seed", [&](const nlohmann::json& v) { cfg.seed = v.get<std::uint64_t>(); });
  field("out", [&](const nlohmann::json& v) { cfg.out_dir = v.get<std::string>(); });
  field("sweep", [&](const nlohmann::json& s) {
    cfg.sweep_levels = s.value("levels", cfg.sweep_levels);
    cfg.sweep_seeds = s.value("seeds", cfg.sweep_seeds);
    cfg.sweep_msl = s.value("msl", cfg.sweep_msl);
  });
  return cfg;
}

RunConfig load_config(const fs::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config file " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

Splits split_for(const Dataset& ds, const RunConfig& cfg)
{
  auto [train, calib, test] = split_dataset(ds, cfg.split, cfg.split_seed());
  return {std::move(train), std::move(calib), std::move(test)};
}

static TrainHyper hyper_for(const RunConfig& cfg)
{
  TrainHyper h = cfg.train;
  h.seed = cfg.train_seed();
  return h;
}

static PlattOptions platt_options(const RunConfig& cfg)
{
  PlattOptions o;
  o.corrected_targets = cfg.platt_corrected_targets;
  return o;
}

ProbabilitySource build_source(const Splits& splits, const RunConfig& cfg)
{
  const TrainHyper hyper = hyper_for(cfg);
  const ConceptSchema& schema = splits.train.schema;
  if (cfg.mode == SourceMode::joint)
    return ProbabilitySource::from_model(train_joint(splits.train, hyper).mlp, schema, SourceMode::joint);
  ProbabilitySource src =
    ProbabilitySource::from_model(train_independent(splits.train, hyper), schema, SourceMode::sequential);
  if (cfg.calibration == CalibrationMethod::none)
    return src;
  return src.with_calibration(
    fit_calibration(src.logits(splits.calib), splits.calib.C, schema, platt_options(cfg)));
}

PipelineResult run_pipeline(const Dataset& ds, const RunConfig& cfg)
{
  cfg.validate();
  Splits splits = split_for(ds, cfg);
  ProbabilitySource source = build_source(splits, cfg);
  McbmModel model = fit_mcbm(splits.train, source, cfg.msl, cfg.mode);
  const Matrix train_probs = source.probs(splits.train);
  const auto& schema = ds.schema;
  BaselineModel hard = fit_baseline(splits.train.C, train_probs, splits.train.Y, schema, cfg.msl, BaselineVariant::hard);
  BaselineModel independent = hard;
  independent.variant = BaselineVariant::independent;
  BaselineModel soft =
    fit_baseline(splits.train.C, train_probs, splits.train.Y, schema, cfg.msl, BaselineVariant::sequential_soft);
  LeakageReport report = path_report(model, splits.train, splits.test, cfg.eval_concepts);
  return {std::move(splits), std::move(source), std::move(model), std::move(hard), std::move(independent),
          std::move(soft),   std::move(report)};
}

CompletenessSweep completeness_sweep(const SynthSpec& base, const std::vector<int>& levels,
                                     const std::vector<std::uint64_t>& seeds, const RunConfig& cfg)
{
  CompletenessSweep out;
  for (int level : levels) {
    if (level < 0 || level > base.n_factors)
      throw std::invalid_argument("completeness_sweep: level " + std::to_string(level) + " outside [0, n_factors]");
    std::vector<double> bits;
    for (auto seed : seeds) {
      RunConfig run = cfg;
      run.seed = seed;
      SynthSpec spec = base;
      spec.revealed.clear();
      for (int g = 0; g < level; ++g)
        spec.revealed.push_back(g);
      spec.seed = run.data_seed();
      run.synthetic = spec;
      const PipelineResult res = run_pipeline(generate_synthetic(spec), run);
      out.rows.push_back({level, seed, res.report.total_leakage_bits, res.report.n_extended_paths,
                          res.report.metrics.task_accuracy});
      bits.push_back(res.report.total_leakage_bits);
    }
    SweepSummary s;
    s.level = level;
    if (!bits.empty()) {
      const Eigen::Map<const Vector> b(bits.data(), static_cast<Eigen::Index>(bits.size()));
      s.mean_bits = b.mean();
      s.std_bits = bits.size() > 1 ? std::sqrt((b.array() - s.mean_bits).square().sum() / static_cast<double>(bits.size() - 1)) : 0.0;
    }
    out.curve.push_back(s);
  }
  return out;
}

std::vector<MslSweepRow> msl_sweep(const Dataset& ds, const RunConfig& cfg, const std::vector<int>& msl_values)
{
  cfg.validate();
  const Splits splits = split_for(ds, cfg);
  const ProbabilitySource source = build_source(splits, cfg);
  std::vector<MslSweepRow> rows;
  for (int msl : msl_values) {
    const McbmModel model = fit_mcbm(splits.train, source, msl, cfg.mode);
    const LeakageReport report = path_report(model, splits.train, splits.test, cfg.eval_concepts);
    const Matrix probs = source.probs(splits.test);
    const Matrix hard = cfg.eval_concepts == ConceptMode::annotated ? splits.test.C : binarize(probs, ds.schema);
    MslSweepRow row;
    row.msl = msl;
    row.global_nodes = model.global.node_count();
    row.merged_nodes = merge(model).node_count();
    row.hard_accuracy = accuracy(predict(model.global, hard), splits.test.Y);
    row.mcbm_accuracy = report.metrics.task_accuracy;
    row.total_bits = report.total_leakage_bits;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Commands

namespace
{

nlohmann::json provenance(const RunConfig& cfg)
{
  return {{"config_hash", cfg.hash()}, {"seed", cfg.seed}};
}

std::string provenance_line(const RunConfig& cfg)
{
  return "config_hash=" + cfg.hash() + " seed=" + std::to_string(cfg.seed);
}

void write_text(const fs::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("missing upstream artifact: " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

void require(const fs::path& path, const char* producer)
{
  if (!fs::exists(path))
    throw std::runtime_error("missing upstream artifact: " + path.string() + " (run '" + producer + "' first)");
}

fs::path out_file(const RunConfig& cfg, const char* name)
{
  return cfg.out_dir / name;
}

Dataset load_run_dataset(const RunConfig& cfg)
{
  if (cfg.synthetic) {
    const fs::path csv = out_file(cfg, "dataset.csv");
    const fs::path schema = out_file(cfg, "schema.json");
    require(csv, "synth");
    require(schema, "synth");
    return load_dataset(csv, schema);
  }
  return load_dataset(cfg.csv_path, cfg.schema_path);
}

std::string source_ref(const RunConfig& cfg)
{
  return cfg.probabilities_path.empty() ? out_file(cfg, "model.json").string() : cfg.probabilities_path.string();
}

bool uses_calibration_file(const RunConfig& cfg)
{
  return cfg.mode == SourceMode::sequential && cfg.calibration != CalibrationMethod::none &&
         !(cfg.probabilities_calibrated && !cfg.probabilities_path.empty());
}

ProbabilitySource uncalibrated_source(const RunConfig& cfg, const ConceptSchema& schema)
{
  if (!cfg.probabilities_path.empty())
    return ProbabilitySource::from_table(read_probability_table(cfg.probabilities_path, schema), schema, cfg.mode,
                                         cfg.probabilities_calibrated);
  const fs::path model = out_file(cfg, "model.json");
  require(model, "train");
  LoadedModel loaded = load_mlp(model, schema);
  if (cfg.mode == SourceMode::joint && !loaded.head)
    throw std::runtime_error(model.string() + ": joint mode needs a jointly trained model (rerun 'train' with mode joint)");
  if (cfg.mode == SourceMode::sequential && loaded.head)
    throw std::runtime_error(model.string() + ": seq mode needs an independently trained model (rerun 'train')");
  return ProbabilitySource::from_model(std::move(loaded.mlp), schema, cfg.mode);
}

ProbabilitySource artifact_source(const RunConfig& cfg, const ConceptSchema& schema)
{
  ProbabilitySource src = uncalibrated_source(cfg, schema);
  if (!uses_calibration_file(cfg))
    return src;
  const fs::path cal = out_file(cfg, "calibration.json");
  require(cal, "calibrate");
  return src.with_calibration(load_calibration(cal, schema));
}

McbmModel load_bundle(const RunConfig& cfg, const ConceptSchema& schema)
{
  const fs::path bundle = out_file(cfg, "mcbm.json");
  require(bundle, "fit");
  McbmModel model = mcbm_from_json(read_json(bundle));
  if (!(model.schema == schema))
    throw std::runtime_error(bundle.string() + ": model bundle was fitted on a different concept schema");
  if (model.mode != cfg.mode)
    throw std::runtime_error(bundle.string() + ": bundle mode differs from config mode");
  return model;
}

} // namespace

void cmd_synth(const RunConfig& cfg)
{
  cfg.validate();
  if (!cfg.synthetic)
    throw std::invalid_argument("config field 'data': synth needs a 'synthetic' data section");
  SynthSpec spec = *cfg.synthetic;
  spec.seed = cfg.data_seed();
  const Dataset ds = generate_synthetic(spec);
  fs::create_directories(cfg.out_dir);
  write_dataset(ds, out_file(cfg, "dataset.csv"), provenance_line(cfg));
  nlohmann::json schema = {{"concepts", ds.schema.concepts},
                           {"groups", ds.schema.groups},
                           {"independents", ds.schema.independents},
                           {"classes", ds.schema.classes},
                           {"provenance", provenance(cfg)}};
  write_json(out_file(cfg, "schema.json"), schema);
}

void cmd_train(const RunConfig& cfg)
{
  cfg.validate();
  if (!cfg.probabilities_path.empty()) {
    std::cerr << "external probabilities configured (" << cfg.probabilities_path.string() << "); nothing to train\n";
    return;
  }
  const Dataset ds = load_run_dataset(cfg);
  const Splits splits = split_for(ds, cfg);
  fs::create_directories(cfg.out_dir);
  const TrainHyper hyper = hyper_for(cfg);
  if (cfg.mode == SourceMode::joint) {
    const JointModel jm = train_joint(splits.train, hyper);
    save_mlp(jm.mlp, ds.schema, out_file(cfg, "model.json"), &jm.head, cfg.hash(), cfg.seed);
  } else {
    save_mlp(train_independent(splits.train, hyper), ds.schema, out_file(cfg, "model.json"), nullptr, cfg.hash(),
             cfg.seed);
  }
}

void cmd_calibrate(const RunConfig& cfg)
{
  cfg.validate();
  if (!uses_calibration_file(cfg))
    throw std::invalid_argument("config field 'calibration': this configuration does not use calibration");
  const Dataset ds = load_run_dataset(cfg);
  const Splits splits = split_for(ds, cfg);
  const ProbabilitySource src = uncalibrated_source(cfg, ds.schema);
  const CalibrationParams cal = fit_calibration(src.logits(splits.calib), splits.calib.C, ds.schema, platt_options(cfg));
  fs::create_directories(cfg.out_dir);
  save_calibration(cal, ds.schema, out_file(cfg, "calibration.json"), cfg.hash(), cfg.seed);
}

void cmd_fit(const RunConfig& cfg)
{
  cfg.validate();
  const Dataset ds = load_run_dataset(cfg);
  const Splits splits = split_for(ds, cfg);
  const ProbabilitySource src = artifact_source(cfg, ds.schema);
  const McbmModel model = fit_mcbm(splits.train, src, cfg.msl, cfg.mode);

  nlohmann::json bundle = to_json(model);
  bundle["prob_source_ref"] = source_ref(cfg);
  bundle["calibration_ref"] = uses_calibration_file(cfg) ? out_file(cfg, "calibration.json").string() : "";
  bundle["provenance"] = provenance(cfg);
  write_json(out_file(cfg, "mcbm.json"), bundle);

  const Matrix probs = src.probs(splits.train);
  const BaselineModel hard = fit_baseline(splits.train.C, probs, splits.train.Y, ds.schema, cfg.msl, BaselineVariant::hard);
  const BaselineModel soft =
    fit_baseline(splits.train.C, probs, splits.train.Y, ds.schema, cfg.msl, BaselineVariant::sequential_soft);
  write_json(out_file(cfg, "baselines.json"), {{"hard", to_json(hard.tree)},
                                               {"independent", to_json(hard.tree)},
                                               {"sequential_soft", to_json(soft.tree)},
                                               {"msl", cfg.msl},
                                               {"provenance", provenance(cfg)}});
}

void cmd_eval(const RunConfig& cfg)
{
  cfg.validate();
  const Dataset ds = load_run_dataset(cfg);
  const Splits splits = split_for(ds, cfg);
  const ProbabilitySource src = artifact_source(cfg, ds.schema);
  const McbmModel model = load_bundle(cfg, ds.schema);
  const fs::path base_path = out_file(cfg, "baselines.json");
  require(base_path, "fit");
  const nlohmann::json base = read_json(base_path);

  const Matrix probs = src.probs(splits.test);
  const auto& test = splits.test;
  nlohmann::json metrics;
  metrics["mcbm"] = to_json(standard_metrics(model, probs, test.C, test.Y, cfg.eval_concepts));
  for (auto [key, variant] : {std::pair{"hard", BaselineVariant::hard}, std::pair{"independent", BaselineVariant::independent},
                              std::pair{"sequential_soft", BaselineVariant::sequential_soft}}) {
    BaselineModel b{variant, tree_from_json(base.at(key))};
    metrics[key] = to_json(standard_metrics(b, probs, test.C, test.Y, ds.schema, cfg.eval_concepts));
  }
  metrics["mode"] = to_string(cfg.mode);
  metrics["eval_concepts"] = cfg.eval_concepts == ConceptMode::annotated ? "annotated" : "predicted";
  metrics["n_test"] = test.size();
  metrics["provenance"] = provenance(cfg);
  write_json(out_file(cfg, "metrics.json"), metrics);
}

void cmd_inspect(const RunConfig& cfg)
{
  cfg.validate();
  const Dataset ds = load_run_dataset(cfg);
  const Splits splits = split_for(ds, cfg);
  McbmModel model = load_bundle(cfg, ds.schema);
  model.source = artifact_source(cfg, ds.schema);
  const LeakageReport report = path_report(model, splits.train, splits.test, cfg.eval_concepts);

  nlohmann::json j = to_json(report);
  j["provenance"] = provenance(cfg);
  write_json(out_file(cfg, "report.json"), j);
  write_text(out_file(cfg, "report.txt"), "# " + provenance_line(cfg) + "\n" + render_table(report));

  DotOptions opts;
  opts.class_names = ds.schema.classes;
  const std::string header = "// " + provenance_line(cfg) + "\n";
  opts.graph_name = "global_tree";
  write_text(out_file(cfg, "global.dot"), header + export_dot(model.global, opts));

  const DecisionTree merged = merge(model);
  opts.graph_name = "merged_tree";
  for (const auto& n : merged.nodes)
    if (!n.is_leaf() && merged.is_soft(n.feature))
      opts.node_notes[n.id] = "IG = " + format_double(std::round(n.gain * 1e4) / 1e4) + " bits";
  write_text(out_file(cfg, "merged.dot"), header + export_dot(merged, opts));
}

void cmd_sweep(const RunConfig& cfg)
{
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  if (cfg.synthetic) {
    std::vector<int> levels = cfg.sweep_levels;
    if (levels.empty())
      for (int g = 1; g <= cfg.synthetic->n_factors; ++g)
        levels.push_back(g);
    const CompletenessSweep sweep = completeness_sweep(*cfg.synthetic, levels, cfg.sweep_seeds, cfg);
    std::string csv = "# " + provenance_line(cfg) + "\nlevel,seed,total_bits\n";
    for (const auto& r : sweep.rows)
      csv += std::to_string(r.level) + "," + std::to_string(r.seed) + "," + format_double(r.total_bits) + "\n";
    write_text(out_file(cfg, "sweep_completeness.csv"), csv);
    std::string curve = "# " + provenance_line(cfg) + "\nlevel,mean_bits,std_bits\n";
    for (const auto& s : sweep.curve)
      curve += std::to_string(s.level) + "," + format_double(s.mean_bits) + "," + format_double(s.std_bits) + "\n";
    write_text(out_file(cfg, "sweep_completeness_curve.csv"), curve);
  }

  const Dataset ds = load_run_dataset(cfg);
  const auto rows = msl_sweep(ds, cfg, cfg.sweep_msl);
  std::string csv = "# " + provenance_line(cfg) + "\nmsl,global_nodes,merged_nodes,hard_accuracy,mcbm_accuracy,total_bits\n";
  for (const auto& r : rows)
    csv += std::to_string(r.msl) + "," + std::to_string(r.global_nodes) + "," + std::to_string(r.merged_nodes) + "," +
           format_double(r.hard_accuracy) + "," + format_double(r.mcbm_accuracy) + "," + format_double(r.total_bits) +
           "\n";
  write_text(out_file(cfg, "sweep_msl.csv"), csv);
}

} // namespace mcbm
