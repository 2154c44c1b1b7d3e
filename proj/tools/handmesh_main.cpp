// Command-line interface: synthetic dataset generation, training, evaluation,
// the gradient audit, and the bundled template builder.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "handmesh/handmesh.hpp"

namespace {

int run_generate(const std::string& config_path, int n, std::uint64_t seed, bool seed_set,
                 const std::string& out_dir) {
  handmesh::RunConfig cfg = handmesh::load_config(config_path);
  if (!seed_set) seed = cfg.seed;
  const handmesh::HandTemplate tmpl = handmesh::load_template(cfg.template_path);
  const auto samples = handmesh::generate_synthetic(cfg, tmpl, n, seed);
  handmesh::save_dataset(out_dir, samples, tmpl, cfg.template_path);
  std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_path) {
  const handmesh::RunConfig cfg = handmesh::load_config(config_path);
  const handmesh::HandTemplate tmpl = handmesh::load_template(cfg.template_path);
  const handmesh::Dataset ds = handmesh::load_dataset(data_dir);
  if (ds.vertex_count != tmpl.vertex_count || ds.joint_count != tmpl.joint_count)
    throw handmesh::CompatibilityError("train: dataset does not match the configured template");
  const handmesh::TrainOutput out = handmesh::train(cfg, tmpl, ds.samples);
  handmesh::save_checkpoint(out_path, out.checkpoint);
  std::ofstream log(out_path + ".log");
  log << out.log;
  std::cout << "trained " << cfg.steps << " steps; checkpoint at " << out_path << "\n";
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& report_path, const std::string& render_dir) {
  const handmesh::Checkpoint ckpt = handmesh::load_checkpoint(ckpt_path);
  const handmesh::RunConfig cfg = handmesh::parse_config_text(ckpt.config_text);
  const handmesh::HandTemplate tmpl = handmesh::load_template(cfg.template_path);
  const handmesh::Dataset ds = handmesh::load_dataset(data_dir);
  const handmesh::MetricsReport report = handmesh::evaluate(ckpt, ds, tmpl, render_dir);
  std::ofstream out(report_path);
  out << report.to_json().dump(2) << "\n";
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int run_gradcheck(const std::string& config_path) {
  std::uint64_t seed = 1;
  if (!config_path.empty()) seed = handmesh::load_config(config_path).seed;
  const std::vector<std::uint64_t> seeds{seed, seed + 1, seed + 2};
  const bool ok = handmesh::gradient_audit(seeds, &std::cout);
  std::cout << (ok ? "gradient audit passed" : "gradient audit FAILED") << "\n";
  return ok ? 0 : 1;
}

int run_make_template(const std::string& out_path) {
  const handmesh::HandTemplate tmpl = handmesh::make_paddle_template();
  handmesh::save_template(tmpl, out_path);
  std::cout << "wrote template (" << tmpl.vertex_count << " vertices, " << tmpl.joint_count
            << " joints) to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probabilistic hand mesh reconstruction toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt_path, report_path, render_dir;
  int n = 16;
  std::uint64_t seed = 0;

  auto* generate = app.add_subcommand("generate", "render a synthetic dataset");
  generate->add_option("--config", config_path, "run configuration")->required();
  generate->add_option("--n", n, "number of samples")->required();
  auto* seed_opt = generate->add_option("--seed", seed, "dataset seed (defaults to config seed)");
  generate->add_option("--out", out_path, "output directory")->required();

  auto* train = app.add_subcommand("train", "train from a dataset directory");
  train->add_option("--config", config_path, "run configuration")->required();
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", ckpt_path, "checkpoint output path")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--report", report_path, "metrics report output (JSON)")->required();
  eval->add_option("--render", render_dir, "directory for rendered outputs");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("--config", config_path, "run configuration (seed source)")->required();

  auto* make_template = app.add_subcommand("make-template", "write the bundled synthetic template");
  make_template->add_option("--out", out_path, "template output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return run_generate(config_path, n, seed, seed_opt->count() > 0, out_path);
    if (train->parsed()) return run_train(config_path, data_dir, ckpt_path);
    if (eval->parsed()) return run_eval(ckpt_path, data_dir, report_path, render_dir);
    if (gradcheck->parsed()) return run_gradcheck(config_path);
    if (make_template->parsed()) return run_make_template(out_path);
  } catch (const handmesh::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
