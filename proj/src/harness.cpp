#include "pflow/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <sstream>

#include "pflow/binary_io.hpp"
#include "pflow/degradations.hpp"
#include "pflow/parallel.hpp"
#include "pflow/report.hpp"

namespace pflow {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const std::string t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ConfigurationError("config: '" + key + "' expects a number, got '" + text + "'");
    return value;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigurationError("config line " + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigurationError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigurationError("config line " + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.has(full)) throw ConfigurationError("config line " + std::to_string(lineno) + ": duplicate key '" + full + "'");
        cfg.values_[full] = trim(line.substr(eq + 1));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return parse(std::string(bytes.begin(), bytes.end()));
}

const std::string& KeyValueConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigurationError("config: missing key '" + key + "'");
    return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

bool parse_flag(const std::string& text) {
    const std::string t = trim(text);
    if (t == "on" || t == "true" || t == "1" || t == "yes") return true;
    if (t == "off" || t == "false" || t == "0" || t == "no") return false;
    throw ConfigurationError("config: expected on/off, got '" + text + "'");
}

ExperimentConfig experiment_config_from(const KeyValueConfig& kv) {
    static const std::vector<std::string> known{
        "experiment.dataset",    "experiment.checkpoint",   "experiment.task",        "experiment.solver",
        "experiment.n_images",   "experiment.data_seed",    "experiment.seeds",       "experiment.output",
        "experiment.histogram_bins", "experiment.ssim_window", "solver.iterations",    "solver.ode_steps",
        "solver.step_size",      "solver.proxy_scalar",     "solver.projection",      "solver.latent_penalty",
        "sweep.ode_steps",       "sweep.iterations",        "sweep.step_size",        "sweep.projection"};
    for (const auto& [key, value] : kv.values())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigurationError("config: unknown key '" + key + "'");

    ExperimentConfig cfg;
    cfg.dataset = kv.get_or("experiment.dataset", cfg.dataset);
    cfg.checkpoint = kv.get_or("experiment.checkpoint", "");
    if (kv.has("experiment.task")) cfg.tasks = split_list(kv.get("experiment.task"));
    if (kv.has("experiment.solver")) cfg.solver = solver_kind_from_name(trim(kv.get("experiment.solver")));
    if (kv.has("experiment.n_images"))
        cfg.n_images = parse_number<std::size_t>("experiment.n_images", kv.get("experiment.n_images"));
    if (kv.has("experiment.data_seed"))
        cfg.data_seed = parse_number<std::uint64_t>("experiment.data_seed", kv.get("experiment.data_seed"));
    if (kv.has("experiment.seeds")) {
        cfg.seeds.clear();
        for (const auto& s : split_list(kv.get("experiment.seeds")))
            cfg.seeds.push_back(parse_number<std::uint64_t>("experiment.seeds", s));
    }
    cfg.output_dir = kv.get_or("experiment.output", "");
    if (kv.has("experiment.histogram_bins"))
        cfg.histogram_bins = parse_number<std::size_t>("experiment.histogram_bins", kv.get("experiment.histogram_bins"));
    if (kv.has("experiment.ssim_window"))
        cfg.ssim_window = parse_number<std::size_t>("experiment.ssim_window", kv.get("experiment.ssim_window"));

    if (kv.has("solver.iterations")) cfg.iterations = parse_number<int>("solver.iterations", kv.get("solver.iterations"));
    if (kv.has("solver.ode_steps")) cfg.ode_steps = parse_number<int>("solver.ode_steps", kv.get("solver.ode_steps"));
    if (kv.has("solver.step_size"))
        cfg.step_size = parse_number<double>("solver.step_size", kv.get("solver.step_size"));
    if (kv.has("solver.proxy_scalar"))
        cfg.proxy_scalar = parse_number<double>("solver.proxy_scalar", kv.get("solver.proxy_scalar"));
    if (kv.has("solver.projection")) cfg.projection = parse_flag(kv.get("solver.projection"));
    if (kv.has("solver.latent_penalty"))
        cfg.latent_penalty = parse_number<double>("solver.latent_penalty", kv.get("solver.latent_penalty"));

    for (const auto& s : split_list(kv.get_or("sweep.ode_steps", "")))
        cfg.sweep_ode_steps.push_back(parse_number<int>("sweep.ode_steps", s));
    for (const auto& s : split_list(kv.get_or("sweep.iterations", "")))
        cfg.sweep_iterations.push_back(parse_number<int>("sweep.iterations", s));
    for (const auto& s : split_list(kv.get_or("sweep.step_size", "")))
        cfg.sweep_step_size.push_back(parse_number<double>("sweep.step_size", s));
    for (const auto& s : split_list(kv.get_or("sweep.projection", ""))) cfg.sweep_projection.push_back(parse_flag(s));
    validate(cfg);
    return cfg;
}

void validate(const ExperimentConfig& cfg) {
    ToyDataset::from_name(cfg.dataset);
    if (cfg.tasks.empty()) throw ConfigurationError("experiment: at least one task is required");
    for (const auto& t : cfg.tasks) default_solver_config(t);
    if (cfg.n_images < 1) throw ConfigurationError("experiment: n_images must be >= 1");
    if (cfg.seeds.empty()) throw ConfigurationError("experiment: at least one seed is required");
    if (cfg.histogram_bins < 1) throw ConfigurationError("experiment: histogram_bins must be >= 1");
    for (const auto& cell : expand_cells(cfg)) validate(cell.solver);
}

std::string SweepCell::key() const {
    return "task=" + task + ";N=" + fmt_int(solver.ode_steps) + ";K=" + fmt_int(solver.iterations) +
           ";eta=" + fmt_real(solver.step_size) + ";proj=" + (solver.projection ? "on" : "off");
}

std::vector<SweepCell> expand_cells(const ExperimentConfig& cfg) {
    std::vector<SweepCell> cells;
    for (const auto& task : cfg.tasks) {
        SolverConfig base = default_solver_config(task);
        if (cfg.iterations) base.iterations = *cfg.iterations;
        if (cfg.ode_steps) base.ode_steps = *cfg.ode_steps;
        if (cfg.step_size) base.step_size = *cfg.step_size;
        base.proxy_scalar = cfg.proxy_scalar;
        base.projection = cfg.projection;
        base.latent_penalty = cfg.latent_penalty;

        const auto ns = cfg.sweep_ode_steps.empty() ? std::vector<int>{base.ode_steps} : cfg.sweep_ode_steps;
        const auto ks = cfg.sweep_iterations.empty() ? std::vector<int>{base.iterations} : cfg.sweep_iterations;
        const auto etas = cfg.sweep_step_size.empty() ? std::vector<double>{base.step_size} : cfg.sweep_step_size;
        const auto projs = cfg.sweep_projection.empty() ? std::vector<bool>{base.projection} : cfg.sweep_projection;
        for (int n : ns)
            for (int k : ks)
                for (double eta : etas)
                    for (bool proj : projs) {
                        SweepCell cell{task, base};
                        cell.solver.ode_steps = n;
                        cell.solver.iterations = k;
                        cell.solver.step_size = eta;
                        cell.solver.projection = proj;
                        cells.push_back(cell);
                    }
    }
    return cells;
}

std::vector<Vector> experiment_images(const ToyDataset& dataset, std::size_t n_images, std::uint64_t data_seed) {
    const Rng base(data_seed);
    std::vector<Vector> out;
    for (std::size_t i = 0; i < n_images; ++i) {
        Rng rng = base.split(i);
        out.push_back(dataset.sample(rng));
    }
    return out;
}

namespace {

struct Workspace {
    ToyDataset dataset;
    std::size_t height;
    std::size_t width;
    std::vector<Vector> images;
};

Workspace make_workspace(const ExperimentConfig& cfg, const VelocityFieldParams& params) {
    ToyDataset ds = ToyDataset::from_name(cfg.dataset);
    if (params.data_dim() != ds.dim())
        throw ConfigurationError("experiment: checkpoint dimension " + std::to_string(params.data_dim()) +
                                 " does not match dataset '" + cfg.dataset + "' (d = " + std::to_string(ds.dim()) + ")");
    const auto [h, w] = ds.image_shape();
    auto images = experiment_images(ds, cfg.n_images, cfg.data_seed);
    return {std::move(ds), h, w, std::move(images)};
}

Observation observe(const Workspace& ws, const std::string& task, std::size_t image, std::uint64_t seed) {
    const LinearOperator op = task_preset(task, static_cast<std::uint32_t>(ws.height), static_cast<std::uint32_t>(ws.width));
    Rng noise = Rng(seed).split(2 * image);
    return degrade(op, ws.images[image], noise);
}

std::string records_csv(const ExperimentResult& r) {
    CsvWriter csv({"cell", "task", "n_steps", "iterations", "step_size", "projection", "image", "seed", "status",
                   "final_loss", "mse", "psnr", "psnr_identical", "ssim", "psnr_degraded", "ssim_degraded"},
                  {"psnr_peak_to_peak=2"});
    for (const auto& rec : r.records) {
        const SweepCell& c = r.cells[rec.cell];
        const bool ok = rec.status == "ok";
        csv.row({fmt_int(static_cast<long long>(rec.cell)), c.task, fmt_int(c.solver.ode_steps),
                 fmt_int(c.solver.iterations), fmt_real(c.solver.step_size), c.solver.projection ? "on" : "off",
                 fmt_int(static_cast<long long>(rec.image)), std::to_string(rec.seed), rec.status,
                 ok ? fmt_real(rec.final_loss) : "", ok ? fmt_real(rec.restored.mse) : "",
                 ok ? fmt_real(rec.restored.psnr) : "", rec.restored.identical ? "1" : "0",
                 ok ? fmt_real(rec.restored.ssim) : "", fmt_real(rec.degraded.psnr), fmt_real(rec.degraded.ssim)});
    }
    return csv.str();
}

std::string summary_csv(const ExperimentResult& r) {
    CsvWriter csv({"cell", "task", "n_steps", "iterations", "step_size", "projection", "solves", "failures",
                   "psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "mse_mean", "psnr_degraded_mean",
                   "ssim_degraded_mean", "improved_fraction"},
                  {"psnr_peak_to_peak=2"});
    for (std::size_t i = 0; i < r.summaries.size(); ++i) {
        const auto& s = r.summaries[i];
        const auto& c = s.cell.solver;
        csv.row({fmt_int(static_cast<long long>(i)), s.cell.task, fmt_int(c.ode_steps), fmt_int(c.iterations),
                 fmt_real(c.step_size), c.projection ? "on" : "off",
                 fmt_int(static_cast<long long>(s.restored.images.size())), fmt_int(static_cast<long long>(s.failures)),
                 fmt_real(s.restored.psnr.mean), fmt_real(s.restored.psnr.std), fmt_real(s.restored.ssim.mean),
                 fmt_real(s.restored.ssim.std), fmt_real(s.restored.mse.mean), fmt_real(s.degraded.psnr.mean),
                 fmt_real(s.degraded.ssim.mean), fmt_real(s.improved_fraction)});
    }
    return csv.str();
}

std::string histogram_csv(const ExperimentResult& r) {
    CsvWriter csv({"cell", "bin", "psnr_lo", "psnr_hi", "count"}, {"psnr_peak_to_peak=2"});
    for (std::size_t i = 0; i < r.summaries.size(); ++i) {
        const Histogram& h = r.summaries[i].restored.psnr_histogram;
        for (std::size_t b = 0; b < h.counts.size(); ++b)
            csv.row({fmt_int(static_cast<long long>(i)), fmt_int(static_cast<long long>(b)),
                     fmt_real(h.lo + h.bin_width() * static_cast<double>(b)),
                     fmt_real(h.lo + h.bin_width() * static_cast<double>(b + 1)), fmt_int(static_cast<long long>(h.counts[b]))});
    }
    return csv.str();
}

std::string summary_svg(const ExperimentResult& r) {
    LineChart chart;
    chart.title = "Mean PSNR per sweep cell";
    chart.x_label = "cell";
    chart.y_label = "PSNR (dB)";
    PlotSeries restored{"restored", {}, {}}, degraded{"degraded input", {}, {}};
    for (std::size_t i = 0; i < r.summaries.size(); ++i) {
        restored.x.push_back(static_cast<double>(i));
        restored.y.push_back(r.summaries[i].restored.psnr.mean);
        degraded.x.push_back(static_cast<double>(i));
        degraded.y.push_back(r.summaries[i].degraded.psnr.mean);
    }
    chart.series = {restored, degraded};
    return render_svg(chart);
}

bool recoverable(const Error& e) {
    return dynamic_cast<const SolverDiverged*>(&e) || dynamic_cast<const IntegrationFailure*>(&e) ||
           dynamic_cast<const DegenerateInput*>(&e) || dynamic_cast<const NumericalFailure*>(&e);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const VelocityFieldParams& params) {
    validate(cfg);
    const Workspace ws = make_workspace(cfg, params);
    ExperimentResult result;
    result.cells = expand_cells(cfg);
    const std::size_t per_cell = cfg.n_images * cfg.seeds.size();
    result.records.resize(result.cells.size() * per_cell);

    parallel_jobs(result.records.size(), [&](std::size_t job) {
        SolveRecord rec;
        rec.cell = job / per_cell;
        rec.image = (job % per_cell) / cfg.seeds.size();
        rec.seed = cfg.seeds[job % cfg.seeds.size()];
        const SweepCell& cell = result.cells[rec.cell];
        const Vector& truth = ws.images[rec.image];
        const Observation obs = observe(ws, cell.task, rec.image, rec.seed);
        rec.degraded = score_image(obs.op.back_project(obs.y), truth, ws.height, ws.width, cfg.ssim_window);
        SolverConfig sc = cell.solver;
        sc.seed = rec.seed;
        Rng start = Rng(rec.seed).split(2 * rec.image + 1);
        try {
            const SolveResult res = run_solver(cfg.solver, params, obs, sc, start);
            rec.final_loss = res.final_loss;
            rec.restored = score_image(res.x1_final, truth, ws.height, ws.width, cfg.ssim_window);
        } catch (const Error& e) {
            if (!recoverable(e)) throw;
            rec.status = e.error_class();
        }
        result.records[job] = rec;
    });

    for (std::size_t c = 0; c < result.cells.size(); ++c) {
        CellSummary s;
        s.cell = result.cells[c];
        std::vector<ImageScore> restored, degraded;
        std::size_t improved = 0;
        for (std::size_t j = c * per_cell; j < (c + 1) * per_cell; ++j) {
            const SolveRecord& rec = result.records[j];
            degraded.push_back(rec.degraded);
            if (rec.status != "ok") {
                ++s.failures;
                continue;
            }
            restored.push_back(rec.restored);
            if (rec.restored.psnr > rec.degraded.psnr) ++improved;
        }
        s.restored = summarize(restored, cfg.histogram_bins);
        s.degraded = summarize(degraded, cfg.histogram_bins);
        s.improved_fraction = restored.empty() ? 0.0 : static_cast<double>(improved) / static_cast<double>(restored.size());
        result.summaries.push_back(std::move(s));
    }

    result.records_csv = records_csv(result);
    result.summary_csv = summary_csv(result);
    result.histogram_csv = histogram_csv(result);
    result.summary_svg = summary_svg(result);
    if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        const std::filesystem::path dir(cfg.output_dir);
        write_text_file((dir / "records.csv").string(), result.records_csv);
        write_text_file((dir / "summary.csv").string(), result.summary_csv);
        write_text_file((dir / "histogram.csv").string(), result.histogram_csv);
        write_text_file((dir / "summary.svg").string(), result.summary_svg);
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    if (cfg.checkpoint.empty()) throw ConfigurationError("experiment: no checkpoint configured");
    if (!std::filesystem::exists(cfg.checkpoint))
        throw ConfigurationError("experiment: checkpoint '" + cfg.checkpoint + "' does not exist");
    return run_experiment(cfg, load_checkpoint(cfg.checkpoint));
}

SolverComparison compare_solvers(const ExperimentConfig& cfg, const VelocityFieldParams& params) {
    validate(cfg);
    const Workspace ws = make_workspace(cfg, params);
    const auto cells = expand_cells(cfg);
    const std::uint64_t seed = cfg.seeds.front();
    SolverComparison out;
    using Clock = std::chrono::steady_clock;
    // Sequential on purpose: wall times are only comparable without contention.
    for (const auto& cell : cells) {
        for (std::size_t i = 0; i < cfg.n_images; ++i) {
            const Observation obs = observe(ws, cell.task, i, seed);
            SolverComparisonRow row;
            row.cell = cell.key();
            row.image = i;
            SolverConfig sc = cell.solver;
            sc.seed = seed;

            Rng rp = Rng(seed).split(2 * i + 1);
            auto t0 = Clock::now();
            const SolveResult p = pflow_solve(params, obs, sc, rp);
            row.pflow_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

            Rng rd = Rng(seed).split(2 * i + 1);
            t0 = Clock::now();
            const SolveResult d = dflow_solve(params, obs, sc, rd);
            row.dflow_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

            row.pflow_tapes = p.counters.peak_tapes;
            row.dflow_tapes = d.counters.peak_tapes;
            row.pflow_forward = p.counters.forward_evals;
            row.dflow_forward = d.counters.forward_evals;
            row.dflow_backward = d.counters.backward_evals;
            row.wall_ratio = row.pflow_ms > 0.0 ? row.dflow_ms / row.pflow_ms : 0.0;
            out.rows.push_back(row);
        }
    }
    CsvWriter csv({"cell", "image", "pflow_ms", "dflow_ms", "wall_ratio", "pflow_peak_tapes", "dflow_peak_tapes",
                   "pflow_forward_evals", "dflow_forward_evals", "dflow_backward_evals"});
    for (const auto& r : out.rows)
        csv.row({r.cell, fmt_int(static_cast<long long>(r.image)), fmt_real(r.pflow_ms), fmt_real(r.dflow_ms),
                 fmt_real(r.wall_ratio), fmt_int(r.pflow_tapes), fmt_int(r.dflow_tapes), fmt_int(r.pflow_forward),
                 fmt_int(r.dflow_forward), fmt_int(r.dflow_backward)});
    out.csv = csv.str();
    return out;
}

}  // namespace pflow
