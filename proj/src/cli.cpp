#include "mcg/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mcg/evaluate.hpp"

namespace mcg {

namespace {

std::string default_config_path() {
  const char* env = std::getenv("MCG_CONFIG");
  return env ? std::string(env) : std::string();
}

struct LoadedModel {
  RunConfig cfg;
  std::unique_ptr<McgModel> model;
};

LoadedModel model_from_checkpoint(const std::string& path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  LoadedModel out;
  out.cfg = RunConfig::parse(ckpt.config_text);
  out.model = std::make_unique<McgModel>(out.cfg.model, Vocabulary::parse(ckpt.vocab_text),
                                         out.cfg.train.seed);
  restore_parameters(out.model->tree(), ckpt.archive, /*strict=*/true);
  return out;
}

EvalPipeline pipeline_of(const RunConfig& cfg) {
  EvalPipeline pipe;
  pipe.frames = cfg.train.frames;
  pipe.resolution = cfg.train.resolution;
  pipe.mean = cfg.image_mean;
  pipe.std_dev = cfg.image_std;
  pipe.sampling = cfg.sampling;
  return pipe;
}

int run_training(const std::string& config_path, TrainStage stage) {
  RunConfig cfg = RunConfig::load(config_path);
  cfg.train.stage = stage;
  if (cfg.manifest_path.empty()) fail("config needs data.manifest");
  if (cfg.checkpoint_out.empty()) fail("config needs checkpoint.out");

  std::unique_ptr<McgModel> model;
  AdamWState opt_state;
  int64_t start_step = 0;
  if (!cfg.init_checkpoint.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(cfg.init_checkpoint);
    RunConfig prev = RunConfig::parse(ckpt.config_text);
    model = std::make_unique<McgModel>(prev.model, Vocabulary::parse(ckpt.vocab_text),
                                       cfg.train.seed);
    restore_parameters(model->tree(), ckpt.archive, /*strict=*/true);
    cfg.model = prev.model;  // the checkpoint owns the architecture
  } else {
    if (cfg.vocab_path.empty()) fail("config needs data.vocab (or train.init_checkpoint)");
    model = std::make_unique<McgModel>(cfg.model, Vocabulary::load(cfg.vocab_path),
                                       cfg.train.seed);
  }
  if (!cfg.init_weights.empty())
    std::cout << import_weights(model->tree(), cfg.init_weights);

  Trainer trainer(*model, cfg, load_manifest(cfg.manifest_path));
  trainer.set_step(start_step);

  const int64_t steps = cfg.train.steps;
  for (int64_t s = 0; s < steps; ++s) {
    const LossBundle l = trainer.run_step();
    if ((s + 1) % 50 == 0 || s + 1 == steps)
      std::cout << "step " << (s + 1) << "/" << steps << " total " << l.total << " (icl " << l.l_icl
                << ", tcl " << l.l_tcl << ", vtm " << l.l_vtm << ", lm " << l.l_lm << ")\n";
    if (cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every == 0 && s + 1 != steps)
      save_checkpoint(cfg.checkpoint_out, model->tree(), &trainer.optimizer_state(),
                      trainer.step(), cfg.to_text(), model->vocab().to_text());
  }
  save_checkpoint(cfg.checkpoint_out, model->tree(), &trainer.optimizer_state(), trainer.step(),
                  cfg.to_text(), model->vocab().to_text());
  std::cout << "checkpoint written to " << cfg.checkpoint_out << "\n";
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"MCG video question answering"};
  app.require_subcommand(1);

  std::string config_path = default_config_path();

  auto* pretrain = app.add_subcommand("pretrain", "train with the joint objective");
  pretrain->add_option("--config", config_path, "run configuration file");
  auto* finetune = app.add_subcommand("finetune", "train with the LM loss only");
  finetune->add_option("--config", config_path, "run configuration file");

  std::string video_path, question, checkpoint_path;
  std::string decode_mode;
  int beam_width = 0, max_len = 0;
  auto* answer = app.add_subcommand("answer", "answer one question about one video");
  answer->add_option("--video", video_path, "media path")->required();
  answer->add_option("--question", question, "question text")->required();
  answer->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  answer->add_option("--decode-mode", decode_mode, "greedy|beam");
  answer->add_option("--beam-width", beam_width, "beam width (<= 5)");
  answer->add_option("--max-len", max_len, "maximum generated tokens");

  std::string manifest_path, out_path, taxonomy_path;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a manifest against a checkpoint");
  evaluate_cmd->add_option("--manifest", manifest_path, "JSON-lines manifest")->required();
  evaluate_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  evaluate_cmd->add_option("--out", out_path, "write the report here");
  evaluate_cmd->add_option("--taxonomy", taxonomy_path, "taxonomy file for WUPS");

  std::string out_dir;
  int pairs = 64, frames = 12, resolution = 32, vocab_size = 120;
  uint64_t seed = 1;
  auto* gen = app.add_subcommand("gen-synthetic", "generate the synthetic dataset");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--pairs", pairs, "number of examples");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--frames", frames, "frames per clip");
  gen->add_option("--resolution", resolution, "frame resolution");
  gen->add_option("--vocab-size", vocab_size, "vocabulary size");

  auto* inspect = app.add_subcommand("inspect-checkpoint", "list the parameter index");
  inspect->add_option("--checkpoint", checkpoint_path, "checkpoint to inspect")->required();

  std::vector<const char*> argv;
  argv.push_back("mcg");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (pretrain->parsed() || finetune->parsed()) {
      if (config_path.empty()) {
        std::cerr << "missing --config (or MCG_CONFIG)\n";
        return 1;
      }
      return run_training(config_path,
                          pretrain->parsed() ? TrainStage::kPretrain : TrainStage::kFinetune);
    }
    if (answer->parsed()) {
      LoadedModel lm = model_from_checkpoint(checkpoint_path);
      DecodeConfig decode = lm.cfg.decode;
      if (!decode_mode.empty())
        decode.mode =
            decode_mode == "beam" ? DecodeConfig::Mode::kBeam : DecodeConfig::Mode::kGreedy;
      if (beam_width > 0) decode.beam_width = beam_width;
      if (max_len > 0) decode.max_len = max_len;
      NormalizedClip clip = load_eval_clip(video_path, pipeline_of(lm.cfg));
      AnswerResult result = lm.model->generate_answer(clip, question, decode);
      std::cout << result.text << "\n";
      if (result.truncated) std::cerr << "note: answer truncated at max length\n";
      return 0;
    }
    if (evaluate_cmd->parsed()) {
      LoadedModel lm = model_from_checkpoint(checkpoint_path);
      const Taxonomy taxonomy =
          taxonomy_path.empty() ? Taxonomy::toy() : Taxonomy::load(taxonomy_path);
      MetricsReport report = evaluate(load_manifest(manifest_path), *lm.model,
                                      pipeline_of(lm.cfg), lm.cfg.decode, taxonomy);
      const std::string json = report.to_json();
      std::cout << json << "\n";
      if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) fail("cannot write report: " + out_path);
        out << json << "\n";
      }
      return 0;
    }
    if (gen->parsed()) {
      SyntheticSpec spec;
      spec.pairs = pairs;
      spec.frames = frames;
      spec.resolution = resolution;
      spec.vocab_size = vocab_size;
      SyntheticDataset data = make_synthetic_dataset(spec, seed, out_dir);
      std::cout << "manifest: " << data.manifest_path << "\nvocab: " << data.vocab_path << "\n";
      return 0;
    }
    if (inspect->parsed()) {
      Archive archive = Archive::load(checkpoint_path);
      for (const auto& [name, sec] : archive.sections()) {
        switch (sec.type) {
          case ArchiveSection::Type::kF64:
            std::cout << name << "  f64 " << sec.tensor.shape_str() << "\n";
            break;
          case ArchiveSection::Type::kI64:
            std::cout << name << "  i64 " << sec.integer << "\n";
            break;
          case ArchiveSection::Type::kText:
            std::cout << name << "  text (" << sec.text.size() << " bytes)\n";
            break;
        }
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace mcg
