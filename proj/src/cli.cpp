#include "mga/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

namespace mga {

namespace fs = std::filesystem;

// ------------------------------------------------------------ training

TrainOutcome run_training(const DatasetManifest& manifest, const TrainRequest& request) {
  RunConfig config = request.config;
  config.model = model_config_for(manifest, config.model);
  const Dataset train_set = build_dataset(manifest, manifest.samples, config.model, request.warnings);
  if (train_set.empty()) throw InvalidInput("manifest lists no training samples");
  Dataset eval_set;
  if (!manifest.eval_samples.empty()) {
    eval_set = build_dataset(manifest, manifest.eval_samples, config.model, request.warnings);
  }

  TrainOutcome r{Model(config.model), {}, {}, {}, std::nullopt};
  if (!config.word_vectors.empty()) {
    r.model.load_word_vectors(load_word_vectors(config.word_vectors), Vocabulary(manifest.word_vocab));
  }
  r.optimizer = OptimizerState::zeros_like(r.model.params(), config.adam);
  auto on_epoch = [&](const EpochMetrics& m, const Model& model, const OptimizerState& state) {
    if (request.metrics) *request.metrics << m.to_json().dump() << '\n' << std::flush;
    const std::size_t every = config.train.checkpoint_interval;
    if (request.checkpoint && every > 0 && m.epoch % every == 0) {
      fs::path p = *request.checkpoint;
      p += ".epoch" + std::to_string(m.epoch);
      save_checkpoint(p.string(), config, model.params(), state);
    }
  };
  r.history = train(r.model, r.optimizer, train_set, config.train, on_epoch);
  if (request.checkpoint) save_checkpoint(request.checkpoint->string(), config, r.model.params(), r.optimizer);
  r.train_accuracy = evaluate(r.model, train_set, config.train.threads);
  if (!eval_set.empty()) r.eval_accuracy = evaluate(r.model, eval_set, config.train.threads);
  return r;
}

// ------------------------------------------------------------ lead graphs

std::string dump_leadgraph(const fs::path& sample, Stream stream, std::size_t layer,
                           const ModelConfig& config) {
  if (layer < 1 || layer > 3) throw InvalidInput("dump-leadgraph: layer must be 1, 2 or 3");
  const LoadedSample s = load_sample(sample);
  const GranularityBundle b = ingest(s.scene, s.question, config.merge_concepts);

  std::vector<std::string> image_labels, question_labels;
  LeadGraph image, question;
  switch (stream) {
    case Stream::ce:
      image_labels = b.concepts.labels;
      image = pairs_to_matrix(b.concepts.pairs, b.concepts.token_count());
      question_labels = b.entities.labels;
      question = pairs_to_matrix(b.entities.pairs, b.entities.token_count());
      break;
    case Stream::rn:
      for (const auto& o : s.scene.objects) image_labels.push_back("region:" + o.category);
      image = pairs_to_matrix(b.regions.pairs, b.regions.token_count());
      question_labels = b.noun_phrases.labels;
      question = pairs_to_matrix(b.noun_phrases.pairs, b.noun_phrases.token_count());
      break;
    case Stream::ss:
      for (std::size_t i = 0; i < b.spatial.token_count(); ++i) image_labels.push_back("cell" + std::to_string(i));
      image = pairs_to_matrix(b.spatial.pairs, b.spatial.token_count());
      question_labels = b.sentence.labels;
      question = pairs_to_matrix(b.sentence.pairs, b.sentence.token_count());
      break;
  }
  const LeadGraph with_sep = append_sep(image, config.stream_options.sep_connect);
  const auto masks = stream_masks(with_sep, question, config.stream_options);

  std::ostringstream os;
  os << "# lead graph v1 stream " << stream_name(stream) << " layer " << layer << '\n';
  os << "# image " << image.size() << ":";
  for (const auto& l : image_labels) os << ' ' << l;
  os << "\n# sep 1\n# question " << question.size() << ":";
  for (const auto& l : question_labels) os << ' ' << l;
  os << '\n' << masks[layer - 1].to_text();
  return os.str();
}

// ------------------------------------------------------------ ablation

std::vector<AblationRow> run_ablation(const DatasetManifest& manifest,
                                      const DatasetManifest* relation_manifest,
                                      const RunConfig& base, std::ostream* progress) {
  struct Variant {
    std::string name;
    RunConfig config;
  };
  auto variant = [&](std::string name, bool lead_graphs, std::array<bool, 3> streams) {
    RunConfig c = base;
    c.model.stream_options.use_lead_graphs = lead_graphs;
    c.model.active_streams = streams;
    return Variant{std::move(name), c};
  };
  const std::vector<Variant> variants = {
      variant("full", true, {true, true, true}),
      variant("no-lead-graph", false, {true, true, true}),
      variant("ce-only", true, {true, false, false}),
      variant("rn-only", true, {false, true, false}),
      variant("ss-only", true, {false, false, true}),
  };
  std::vector<AblationRow> rows;
  auto run = [&](const std::string& corpus, const DatasetManifest& m, const Variant& v) {
    if (progress) *progress << "ablation: " << corpus << " / " << v.name << " ..." << std::endl;
    TrainRequest req;
    req.config = v.config;
    const TrainOutcome o = run_training(m, req);
    rows.push_back({corpus, v.name, o.train_accuracy.accuracy.averaged,
                    o.eval_accuracy ? o.eval_accuracy->accuracy.averaged : 0.0});
  };
  for (const auto& v : variants) run("toy", manifest, v);
  if (relation_manifest) {
    run("relation-only", *relation_manifest, variants[0]);
    run("relation-only", *relation_manifest, variants[1]);
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(15) << "corpus" << std::setw(15) << "variant" << std::right
     << std::setw(10) << "train" << std::setw(10) << "eval" << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    os << std::left << std::setw(15) << r.corpus << std::setw(15) << r.variant << std::right
       << std::setw(10) << r.train_accuracy << std::setw(10) << r.eval_accuracy << '\n';
  }
  return os.str();
}

// ------------------------------------------------------------ argv

namespace {

RunConfig load_run_config(const std::string& path) {
  return path.empty() ? default_run_config() : run_config_from(KeyValueConfig::load(path));
}

void print_accuracy(std::ostream& out, const std::string& split, const AccuracyReport& r) {
  nlohmann::ordered_json j;
  j["split"] = split;
  const nlohmann::ordered_json report = r.to_json();
  for (const auto& [k, v] : report.items()) j[k] = v;
  out << j.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-granularity alignment transformer for toy VQA", "mga"};
  app.require_subcommand(1);

  std::string spec_path, data_dir, config_path, out_path, ckpt_path, sample_path, metrics_path,
      stream_name_arg, split = "auto", relation_dir;
  std::size_t n = 0, layer = 0, sample_index = 0, epochs = 0, coords = 6;
  std::uint64_t seed = 0;
  double step = 1e-5, tol = 1e-5, atol = 0.0, table_scale = 50.0;

  auto* gen = app.add_subcommand("gen-data", "Generate a toy VQA corpus");
  gen->add_option("--spec", spec_path, "Toy-world spec file")->required();
  gen->add_option("--n", n, "Number of training samples")->required();
  gen->add_option("--seed", seed, "Corpus seed")->required();
  gen->add_option("--out", out_path, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", data_dir, "Dataset directory or manifest")->required();
  tr->add_option("--config", config_path, "Run config file")->required();
  tr->add_option("--out", out_path, "Checkpoint path")->required();
  tr->add_option("--metrics", metrics_path, "Write per-epoch metrics here instead of stdout");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--data", data_dir, "Dataset directory or manifest")->required();
  ev->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  ev->add_option("--split", split, "train, eval or auto")->check(CLI::IsMember({"train", "eval", "auto"}));

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check on one sample");
  gc->add_option("--data", data_dir, "Dataset directory or manifest")->required();
  gc->add_option("--sample", sample_index, "Training sample index");
  gc->add_option("--config", config_path, "Run config file");
  gc->add_option("--step", step, "Central-difference step");
  gc->add_option("--tol", tol, "Relative error tolerance");
  gc->add_option("--coords", coords, "Random coordinates per block");
  gc->add_option("--atol", atol, "Also accept coordinates with absolute error below this (0 = off)");
  gc->add_option("--table-scale", table_scale, "Factor applied to embedding, positional and SEP blocks before checking");

  auto* dl = app.add_subcommand("dump-leadgraph", "Print the layer mask of one stream");
  dl->add_option("--sample", sample_path, "Sample JSON file")->required();
  dl->add_option("--stream", stream_name_arg, "ce, rn or ss")->required()->check(CLI::IsMember({"ce", "rn", "ss"}));
  dl->add_option("--layer", layer, "1, 2 or 3")->required()->check(CLI::Range(1, 3));

  auto* ab = app.add_subcommand("ablate", "Train the ablation variants and print a comparison table");
  ab->add_option("--data", data_dir, "Dataset directory or manifest")->required();
  ab->add_option("--config", config_path, "Run config file");
  ab->add_option("--relation-data", relation_dir, "Relation-template-only corpus");
  ab->add_option("--epochs", epochs, "Override the configured epoch count");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (gen->parsed()) {
      const DatasetManifest m = gen_data(load_toy_world_spec(spec_path), n, seed, out_path);
      out << "wrote " << m.samples.size() << " training and " << m.eval_samples.size()
          << " eval samples to " << out_path << '\n';
      return 0;
    }
    if (tr->parsed()) {
      const DatasetManifest m = load_manifest(data_dir);
      std::ofstream metrics_file;
      if (!metrics_path.empty()) {
        metrics_file.open(metrics_path, std::ios::trunc);
        if (!metrics_file) throw InvalidInput("cannot write metrics file " + metrics_path);
      }
      TrainRequest req;
      req.config = load_run_config(config_path);
      req.metrics = metrics_path.empty() ? &out : &metrics_file;
      req.warnings = &err;
      req.checkpoint = out_path;
      const TrainOutcome o = run_training(m, req);
      print_accuracy(err, "train", o.train_accuracy);
      if (o.eval_accuracy) print_accuracy(err, "eval", *o.eval_accuracy);
      return 0;
    }
    if (ev->parsed()) {
      const DatasetManifest m = load_manifest(data_dir);
      const Checkpoint ck = load_checkpoint(ckpt_path);
      const ModelConfig expected = model_config_for(m, ck.config.model);
      if (expected.vocab_size != ck.config.model.vocab_size ||
          expected.answer_count != ck.config.model.answer_count) {
        throw InvalidInput("checkpoint vocabulary sizes do not match the dataset manifest");
      }
      const Model model = restore_model(ck);
      if (split == "auto") split = m.eval_samples.empty() ? "train" : "eval";
      const auto& files = split == "train" ? m.samples : m.eval_samples;
      const Dataset data = build_dataset(m, files, ck.config.model, &err);
      print_accuracy(out, split, evaluate(model, data, ck.config.train.threads));
      return 0;
    }
    if (gc->parsed()) {
      const DatasetManifest m = load_manifest(data_dir);
      if (sample_index >= m.samples.size()) {
        throw InvalidInput("--sample " + std::to_string(sample_index) + " out of range (" +
                           std::to_string(m.samples.size()) + " samples)");
      }
      RunConfig c = load_run_config(config_path);
      c.model = model_config_for(m, c.model);
      const Dataset data = build_dataset(m, {m.samples[sample_index]}, c.model, &err);
      Model model(c.model);
      rescale_embedding_blocks(model, table_scale);
      const GradcheckReport report =
          gradcheck(model, data.front(), step, tol, coords, c.train.seed, atol);
      out << report.to_text();
      return report.passed() ? 0 : 1;
    }
    if (dl->parsed()) {
      out << dump_leadgraph(sample_path, parse_stream(stream_name_arg), layer);
      return 0;
    }
    if (ab->parsed()) {
      RunConfig c = load_run_config(config_path);
      if (epochs > 0) c.train.epochs = epochs;
      const DatasetManifest m = load_manifest(data_dir);
      std::optional<DatasetManifest> rel;
      if (!relation_dir.empty()) rel = load_manifest(relation_dir);
      const auto rows = run_ablation(m, rel ? &*rel : nullptr, c, &err);
      out << ablation_table(rows);
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace mga
