// pflow: train velocity fields, solve inverse problems, run sweeps,
// diagnostics and solver benchmarks.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "pflow/cfm.hpp"
#include "pflow/datasets.hpp"
#include "pflow/degradations.hpp"
#include "pflow/diagnostics.hpp"
#include "pflow/harness.hpp"
#include "pflow/metrics.hpp"
#include "pflow/report.hpp"
#include "pflow/solver.hpp"

namespace fs = std::filesystem;
using namespace pflow;

namespace {

int exit_code_for(const std::string& error_class) {
    static const std::map<std::string, int> codes{
        {"configuration", 2},       {"io", 3},
        {"contract-violation", 10}, {"numerical-failure", 11},
        {"singular-matrix", 12},    {"capability", 13},
        {"training-diverged", 14},  {"integration-failure", 15},
        {"solver-diverged", 16},    {"degenerate-input", 17},
    };
    const auto it = codes.find(error_class);
    return it == codes.end() ? 1 : it->second;
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_text_file(path, text);
}

std::string out_path(const std::string& dir, const std::string& name) {
    if (dir.empty()) return "";
    fs::create_directories(dir);
    return (fs::path(dir) / name).string();
}

struct TrainArgs {
    std::string dataset = "gauss-mixture-2d";
    std::string out;
    std::string log;
    std::uint64_t seed = 0;
    int epochs = 200;
    int steps = 25;
    std::size_t batch = 64;
    double lr = 1e-4;
    std::string coupling = "minibatch-ot";
    std::vector<std::size_t> hidden{128, 128, 128};
    std::size_t time_frequencies = 4;
};

int run_train(const TrainArgs& a) {
    const ToyDataset ds = ToyDataset::from_name(a.dataset);
    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.steps_per_epoch = a.steps;
    cfg.batch_size = a.batch;
    cfg.learning_rate = a.lr;
    cfg.coupling = coupling_from_name(a.coupling);
    cfg.seed = a.seed;
    cfg.arch.hidden = a.hidden;
    cfg.arch.time_frequencies = a.time_frequencies;
    Rng rng(a.seed);
    const TrainResult res = train(ds, cfg, rng, [&](const EpochRecord& e) {
        std::cerr << "epoch " << e.epoch << " loss " << fmt_real(e.mean_loss) << "\n";
    });
    save_checkpoint(a.out, res.params);
    if (!a.log.empty()) emit(a.log, training_log_csv(res.log));
    std::cout << "checkpoint " << a.out << " params " << res.params.num_params() << " final_loss "
              << fmt_real(res.log.back().mean_loss) << "\n";
    return 0;
}

struct SolveArgs {
    std::string checkpoint;
    std::string dataset = "synth-gray-16x16";
    std::string task = "denoise";
    std::string solver = "pflow";
    std::size_t image = 0;
    std::uint64_t data_seed = 0;
    std::uint64_t seed = 0;
    std::optional<int> iterations;
    std::optional<int> ode_steps;
    std::optional<double> step_size;
    double proxy_scalar = 1.0;
    std::string projection = "on";
    double latent_penalty = 0.0;
    std::string csv;
    std::string observation;
};

int run_solve(const SolveArgs& a) {
    ExperimentConfig ec;
    ec.dataset = a.dataset;
    ec.checkpoint = a.checkpoint;
    ec.tasks = {a.task};
    ec.solver = solver_kind_from_name(a.solver);
    ec.iterations = a.iterations;
    ec.ode_steps = a.ode_steps;
    ec.step_size = a.step_size;
    ec.proxy_scalar = a.proxy_scalar;
    ec.projection = parse_flag(a.projection);
    ec.latent_penalty = a.latent_penalty;
    ec.n_images = a.image + 1;
    ec.data_seed = a.data_seed;
    ec.seeds = {a.seed};
    validate(ec);
    if (!fs::exists(a.checkpoint)) throw ConfigurationError("checkpoint '" + a.checkpoint + "' does not exist");
    const VelocityFieldParams params = load_checkpoint(a.checkpoint);
    const ToyDataset ds = ToyDataset::from_name(a.dataset);
    if (params.data_dim() != ds.dim()) throw ConfigurationError("checkpoint dimension does not match the dataset");
    const auto [h, w] = ds.image_shape();
    const Vector truth = experiment_images(ds, ec.n_images, ec.data_seed)[a.image];

    // Same seed streams as the sweep harness.
    const LinearOperator op = task_preset(a.task, static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w));
    Rng noise = Rng(a.seed).split(2 * a.image);
    Observation obs = degrade(op, truth, noise);
    SolverConfig sc = expand_cells(ec).front().solver;
    sc.seed = a.seed;
    Rng start = Rng(a.seed).split(2 * a.image + 1);
    const SolveResult res = run_solver(ec.solver, params, obs, sc, start);

    const ImageScore restored = score_image(res.x1_final, truth, h, w);
    const ImageScore degraded = score_image(op.back_project(obs.y), truth, h, w);
    if (!a.csv.empty()) emit(a.csv, solve_csv(res));
    if (!a.observation.empty()) {
        obs.reconstruction = res.x1_final;
        save_observation(a.observation, obs);
    }
    std::cout << "task " << a.task << " solver " << a.solver << " K " << sc.iterations << " N " << sc.ode_steps
              << " eta " << fmt_real(sc.step_size) << "\n"
              << "final_loss " << fmt_real(res.final_loss) << "\n"
              << "psnr " << fmt_real(restored.psnr) << " degraded_psnr " << fmt_real(degraded.psnr) << "\n"
              << "ssim " << fmt_real(restored.ssim) << " degraded_ssim " << fmt_real(degraded.ssim) << "\n"
              << "forward_evals " << res.counters.forward_evals << " backward_evals " << res.counters.backward_evals
              << " peak_tapes " << res.counters.peak_tapes << "\n";
    return 0;
}

int run_sweep(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& output) {
    KeyValueConfig kv = KeyValueConfig::load(config_path);
    if (seed) kv.set("experiment.seeds", std::to_string(*seed));
    if (!kv.has("experiment.seeds")) throw ConfigurationError("sweep: set experiment.seeds in the config or pass --seed");
    if (!output.empty()) kv.set("experiment.output", output);
    const ExperimentConfig cfg = experiment_config_from(kv);
    const ExperimentResult res = run_experiment(cfg);
    std::cout << res.summary_csv;
    return 0;
}

struct DiagnoseArgs {
    std::string experiment = "chain";
    std::string checkpoint;
    std::string dataset = "two-moons-2d";
    std::string task = "random-inpaint";
    std::uint64_t seed = 0;
    int ode_steps = 10;
    std::size_t probes = 200;
    std::size_t trials = 10;
    std::vector<double> epsilons{0.0, 0.05, 0.1, 0.2};
    std::vector<int> ns{1, 2, 5, 10, 20};
    std::vector<double> scales{1e-12, 1e-8, 1e-4, 1e-2};
    std::size_t pairs = 1000;
    std::string out;
};

int run_diagnose(const DiagnoseArgs& a) {
    Rng rng(a.seed);
    if (a.experiment == "anisotropy") {
        const auto rows = anisotropy_growth_experiment(a.epsilons, a.ns, rng);
        emit(out_path(a.out, "anisotropy.csv"), anisotropy_csv(rows));
        return 0;
    }
    if (!fs::exists(a.checkpoint)) throw ConfigurationError("checkpoint '" + a.checkpoint + "' does not exist");
    const VelocityFieldParams params = load_checkpoint(a.checkpoint);
    const std::size_t d = params.data_dim();

    if (a.experiment == "chain") {
        const JacobianChain chain = build_jacobian_chain(params, sample_standard_normal(rng, d), a.ode_steps);
        emit(out_path(a.out, "chain.csv"), jacobian_chain_csv(chain));
        if (!a.out.empty()) {
            LineChart chart{"Local and cumulative condition numbers", "ODE step", "kappa", true, {}};
            PlotSeries local{"kappa(A_i)", {}, chain.factor_kappa}, cumulative{"kappa(M_k)", {}, chain.prefix_kappa};
            for (std::size_t i = 0; i < chain.factors.size(); ++i) {
                local.x.push_back(static_cast<double>(i + 1));
                cumulative.x.push_back(static_cast<double>(i + 1));
            }
            chart.series = {local, cumulative};
            write_text_file(out_path(a.out, "chain.svg"), render_svg(chart));
        }
        return 0;
    }
    if (a.experiment == "perturbation") {
        const auto rows = perturbation_experiment(params, sample_standard_normal(rng, d), a.ode_steps, a.scales,
                                                  a.trials, rng);
        emit(out_path(a.out, "perturbation.csv"), perturbation_csv(rows));
        return 0;
    }
    if (a.experiment == "gronwall") {
        std::vector<std::pair<Vector, Vector>> pairs;
        for (std::size_t i = 0; i < a.pairs; ++i)
            pairs.emplace_back(sample_standard_normal(rng, d), sample_standard_normal(rng, d));
        const GronwallReport rep = gronwall_check(params, pairs, FlowConfig{a.ode_steps, false});
        std::cout << "lipschitz_bound " << fmt_real(rep.lipschitz_bound) << " growth_bound "
                  << fmt_real(rep.growth_bound) << " max_ratio " << fmt_real(rep.max_ratio) << " violations "
                  << rep.violations << "\n";
        return 0;
    }
    if (a.experiment == "alignment") {
        const ToyDataset ds = ToyDataset::from_name(a.dataset);
        if (ds.dim() != d) throw ConfigurationError("checkpoint dimension does not match the dataset");
        const auto [h, w] = ds.image_shape();
        const Vector truth = experiment_images(ds, 1, a.seed).front();
        Rng noise = Rng(a.seed).split(0);
        const Observation obs =
            degrade(task_preset(a.task, static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)), truth, noise);
        SolverConfig sc = default_solver_config(a.task);
        sc.seed = a.seed;
        const AlignmentSummary sum = alignment_sweep(params, obs, sc, a.probes);
        emit(out_path(a.out, "alignment.csv"), alignment_csv(sum));
        if (!a.out.empty()) {
            PlotSeries s{"cos(g, g')", {}, {}};
            for (const auto& r : sum.records) {
                s.x.push_back(r.progress);
                s.y.push_back(r.cos);
            }
            write_text_file(out_path(a.out, "alignment.svg"),
                            render_svg(LineChart{"Proxy vs exact gradient alignment", "progress k/K", "cosine", false, {s}}));
        }
        std::cerr << "fraction_positive " << fmt_real(sum.fraction_positive) << " skipped " << sum.skipped << "\n";
        return 0;
    }
    throw ConfigurationError("unknown experiment '" + a.experiment +
                             "' (valid: chain, anisotropy, alignment, perturbation, gronwall)");
}

struct BenchArgs {
    std::string checkpoint;
    std::string dataset = "synth-gray-16x16";
    std::string task = "denoise";
    std::vector<int> ode_steps{1, 5, 10};
    int iterations = 10;
    std::size_t n_images = 2;
    std::uint64_t seed = 0;
    std::string out;
};

int run_bench(const BenchArgs& a) {
    ExperimentConfig ec;
    ec.dataset = a.dataset;
    ec.checkpoint = a.checkpoint;
    ec.tasks = {a.task};
    ec.iterations = a.iterations;
    ec.sweep_ode_steps = a.ode_steps;
    ec.n_images = a.n_images;
    ec.seeds = {a.seed};
    validate(ec);
    if (!fs::exists(a.checkpoint)) throw ConfigurationError("checkpoint '" + a.checkpoint + "' does not exist");
    const SolverComparison cmp = compare_solvers(ec, load_checkpoint(a.checkpoint));
    emit(a.out, cmp.csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Proxy-gradient source optimization for flow-matching priors"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a velocity field by conditional flow matching");
    train_cmd->add_option("--dataset", ta.dataset, "Dataset kind")->check(CLI::IsMember(ToyDataset::names()));
    train_cmd->add_option("--out", ta.out, "Output checkpoint path")->required();
    train_cmd->add_option("--log", ta.log, "Training log CSV path");
    train_cmd->add_option("--seed", ta.seed, "RNG seed")->required();
    train_cmd->add_option("--epochs", ta.epochs, "Epochs");
    train_cmd->add_option("--steps-per-epoch", ta.steps, "Optimizer steps per epoch");
    train_cmd->add_option("--batch-size", ta.batch, "Minibatch size");
    train_cmd->add_option("--lr", ta.lr, "Adam learning rate");
    train_cmd->add_option("--coupling", ta.coupling, "independent | minibatch-ot");
    train_cmd->add_option("--hidden", ta.hidden, "Hidden layer widths")->delimiter(',');
    train_cmd->add_option("--time-frequencies", ta.time_frequencies, "Sinusoidal time frequencies");

    SolveArgs sa;
    auto* solve_cmd = app.add_subcommand("solve", "Restore one degraded image");
    solve_cmd->add_option("--checkpoint", sa.checkpoint, "Checkpoint path")->required();
    solve_cmd->add_option("--dataset", sa.dataset, "Dataset the checkpoint was trained on");
    solve_cmd->add_option("--task", sa.task, "denoise | blur | sr | random-inpaint | box-inpaint");
    solve_cmd->add_option("--solver", sa.solver, "pflow | dflow | oracle");
    solve_cmd->add_option("--image", sa.image, "Image index");
    solve_cmd->add_option("--data-seed", sa.data_seed, "Seed of the ground-truth image stream");
    solve_cmd->add_option("--seed", sa.seed, "Seed for noise and the initial latent")->required();
    solve_cmd->add_option("--iterations", sa.iterations, "K");
    solve_cmd->add_option("--ode-steps", sa.ode_steps, "N");
    solve_cmd->add_option("--step-size", sa.step_size, "eta");
    solve_cmd->add_option("--proxy-scalar", sa.proxy_scalar, "C");
    solve_cmd->add_option("--projection", sa.projection, "on | off");
    solve_cmd->add_option("--latent-penalty", sa.latent_penalty, "lambda (dflow, oracle)");
    solve_cmd->add_option("--csv", sa.csv, "Per-iteration CSV path");
    solve_cmd->add_option("--observation", sa.observation, "Write the observation record with the reconstruction");

    std::string sweep_config, sweep_output;
    std::optional<std::uint64_t> sweep_seed;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment config");
    sweep_cmd->add_option("--config", sweep_config, "Experiment config file")->required();
    sweep_cmd->add_option("--seed", sweep_seed, "Overrides experiment.seeds");
    sweep_cmd->add_option("--out", sweep_output, "Overrides experiment.output");

    DiagnoseArgs da;
    auto* diag_cmd = app.add_subcommand("diagnose", "Jacobian-chain and gradient diagnostics");
    diag_cmd->add_option("--experiment", da.experiment, "chain | anisotropy | alignment | perturbation | gronwall");
    diag_cmd->add_option("--checkpoint", da.checkpoint, "Checkpoint path");
    diag_cmd->add_option("--dataset", da.dataset, "Dataset for alignment observations");
    diag_cmd->add_option("--task", da.task, "Task for alignment observations");
    diag_cmd->add_option("--seed", da.seed, "RNG seed")->required();
    diag_cmd->add_option("--ode-steps", da.ode_steps, "N");
    diag_cmd->add_option("--probes", da.probes, "Alignment probes");
    diag_cmd->add_option("--trials", da.trials, "Random perturbations per scale");
    diag_cmd->add_option("--epsilons", da.epsilons, "Anisotropy levels")->delimiter(',');
    diag_cmd->add_option("--ns", da.ns, "Step counts for the anisotropy table")->delimiter(',');
    diag_cmd->add_option("--scales", da.scales, "Perturbation norms")->delimiter(',');
    diag_cmd->add_option("--pairs", da.pairs, "Random pairs for the Lipschitz check");
    diag_cmd->add_option("--out", da.out, "Output directory (stdout when empty)");

    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench", "Wall time and cached tapes, pflow vs dflow");
    bench_cmd->add_option("--checkpoint", ba.checkpoint, "Checkpoint path")->required();
    bench_cmd->add_option("--dataset", ba.dataset, "Dataset the checkpoint was trained on");
    bench_cmd->add_option("--task", ba.task, "Task preset");
    bench_cmd->add_option("--ode-steps", ba.ode_steps, "N values")->delimiter(',');
    bench_cmd->add_option("--iterations", ba.iterations, "K");
    bench_cmd->add_option("--n-images", ba.n_images, "Images per cell");
    bench_cmd->add_option("--seed", ba.seed, "RNG seed")->required();
    bench_cmd->add_option("--out", ba.out, "CSV path (stdout when empty)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "pflow: error[configuration]: " << e.what() << "\n";
        return exit_code_for("configuration");
    }

    try {
        if (*train_cmd) return run_train(ta);
        if (*solve_cmd) return run_solve(sa);
        if (*sweep_cmd) return run_sweep(sweep_config, sweep_seed, sweep_output);
        if (*diag_cmd) return run_diagnose(da);
        if (*bench_cmd) return run_bench(ba);
    } catch (const Error& e) {
        std::cerr << "pflow: error[" << e.error_class() << "]: " << e.what() << "\n";
        return exit_code_for(e.error_class());
    } catch (const std::exception& e) {
        std::cerr << "pflow: error[internal]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
