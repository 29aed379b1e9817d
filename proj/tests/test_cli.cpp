#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_dir;

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run(const std::string& args) {
    const fs::path out = g_dir / "stdout.txt", err = g_dir / "stderr.txt";
    const std::string cmd = "\"" + g_cli + "\" " + args + " > \"" + out.string() + "\" 2> \"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

std::string path(const std::string& name) {
    return "\"" + (g_dir / name).string() + "\"";
}

const std::string& toy_checkpoint() {
    static const std::string ckpt = [] {
        const RunResult r = run("train --dataset gauss-mixture-2d --out " + path("toy.ckpt") +
                                " --seed 1 --epochs 3 --steps-per-epoch 5 --hidden 16,16");
        REQUIRE(r.code == 0);
        return (g_dir / "toy.ckpt").string();
    }();
    return ckpt;
}

}  // namespace

TEST_CASE("train writes a checkpoint and a log, deterministically") {
    const RunResult a = run("train --dataset two-moons-2d --out " + path("a.ckpt") + " --log " + path("a.csv") +
                            " --seed 5 --epochs 2 --steps-per-epoch 4 --hidden 8");
    REQUIRE(a.code == 0);
    const RunResult b = run("train --dataset two-moons-2d --out " + path("b.ckpt") +
                            " --seed 5 --epochs 2 --steps-per-epoch 4 --hidden 8");
    REQUIRE(b.code == 0);
    const std::string ca = read_file(g_dir / "a.ckpt");
    CHECK(ca.substr(0, 4) == "PFLW");
    CHECK(ca == read_file(g_dir / "b.ckpt"));
    const std::string log = read_file(g_dir / "a.csv");
    CHECK(log.rfind("epoch,mean_loss,wall_ms\n", 0) == 0);
}

TEST_CASE("solve prints a summary and writes the iteration csv and observation") {
    const RunResult r = run("solve --checkpoint \"" + toy_checkpoint() + "\" --dataset gauss-mixture-2d --task denoise " +
                            "--seed 3 --iterations 7 --csv " + path("solve.csv") + " --observation " + path("obs.bin"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("peak_tapes 1") != std::string::npos);
    const std::string csv = read_file(g_dir / "solve.csv");
    CHECK(csv.rfind("k,loss,x0_norm,wall_ms,cached_tapes\n", 0) == 0);
    CHECK(read_file(g_dir / "obs.bin").substr(0, 4) == "PFOB");
}

TEST_CASE("sweep runs a config file") {
    std::ofstream(g_dir / "exp.cfg") << "[experiment]\n"
                                     << "dataset = gauss-mixture-2d\n"
                                     << "checkpoint = " << toy_checkpoint() << "\n"
                                     << "task = denoise, box-inpaint\n"
                                     << "n_images = 2\n"
                                     << "[solver]\n"
                                     << "iterations = 3\n";
    const RunResult r = run("sweep --config " + path("exp.cfg") + " --seed 4 --out " + path("sweep"));
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("# psnr_peak_to_peak=2\n", 0) == 0);
    for (const char* f : {"records.csv", "summary.csv", "histogram.csv", "summary.svg"})
        CHECK(fs::exists(g_dir / "sweep" / f));

    const RunResult no_seed = run("sweep --config " + path("exp.cfg"));
    CHECK(no_seed.code == 2);
    CHECK(no_seed.err.find("error[configuration]") != std::string::npos);
}

TEST_CASE("diagnose experiments") {
    const RunResult aniso = run("diagnose --experiment anisotropy --seed 1 --epsilons 0.2 --ns 10");
    REQUIRE(aniso.code == 0);
    CHECK(aniso.out.rfind("epsilon,n_steps,kappa_aligned", 0) == 0);

    const std::string ck = " --checkpoint \"" + toy_checkpoint() + "\" --seed 2";
    const RunResult chain = run("diagnose --experiment chain" + ck + " --ode-steps 4 --out " + path("diag"));
    REQUIRE(chain.code == 0);
    CHECK(fs::exists(g_dir / "diag" / "chain.csv"));
    CHECK(fs::exists(g_dir / "diag" / "chain.svg"));

    const RunResult gron = run("diagnose --experiment gronwall" + ck + " --pairs 50");
    REQUIRE(gron.code == 0);
    CHECK(gron.out.find("violations 0") != std::string::npos);

    const RunResult align = run("diagnose --experiment alignment" + ck + " --dataset gauss-mixture-2d --probes 20");
    REQUIRE(align.code == 0);
    CHECK(align.out.find("solve,k,progress,cos,alpha_hat") != std::string::npos);

    const RunResult pert = run("diagnose --experiment perturbation" + ck + " --trials 3");
    REQUIRE(pert.code == 0);
    CHECK(pert.out.rfind("scale,worst_case", 0) == 0);

    const RunResult bad = run("diagnose --experiment spectra" + ck);
    CHECK(bad.code == 2);
}

TEST_CASE("bench compares solvers") {
    const RunResult r = run("bench --checkpoint \"" + toy_checkpoint() +
                            "\" --dataset gauss-mixture-2d --ode-steps 1,4 --iterations 2 --n-images 1 --seed 0");
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("cell,image,pflow_ms,dflow_ms,wall_ratio", 0) == 0);
}

TEST_CASE("errors carry a class and an exit code") {
    const RunResult missing_seed = run("solve --checkpoint " + path("toy.ckpt"));
    CHECK(missing_seed.code == 2);
    CHECK(missing_seed.err.find("pflow: error[configuration]") != std::string::npos);

    const RunResult no_ckpt = run("solve --checkpoint " + path("none.ckpt") + " --seed 1");
    CHECK(no_ckpt.code == 2);

    const RunResult bad_task = run("solve --checkpoint \"" + toy_checkpoint() +
                                   "\" --dataset gauss-mixture-2d --task colorize --seed 1");
    CHECK(bad_task.code == 2);
    CHECK(bad_task.err.find("box-inpaint") != std::string::npos);

    std::ofstream(g_dir / "junk.ckpt") << "not a checkpoint";
    const RunResult junk = run("solve --checkpoint " + path("junk.ckpt") + " --seed 1");
    CHECK(junk.code == 3);
    CHECK(junk.err.find("error[io]") != std::string::npos);

    const RunResult no_sub = run("");
    CHECK(no_sub.code == 2);
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-pflow> [doctest options]\n");
        return 2;
    }
    g_cli = argv[1];
    g_dir = fs::temp_directory_path() / "pflow_cli_test";
    fs::remove_all(g_dir);
    fs::create_directories(g_dir);
    doctest::Context ctx;
    ctx.applyCommandLine(argc - 1, argv + 1);
    const int rc = ctx.run();
    fs::remove_all(g_dir);
    return rc;
}
