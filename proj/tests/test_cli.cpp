#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cupid/io.hpp"

// End-to-end checks of the installed command-line binary.

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun cli(const std::string& args) {
    const std::string out_file = "cli_out.txt";
    const std::string cmd = std::string(CUPID_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CliRun r;
    r.code = WEXITSTATUS(raw);
    std::ifstream f(out_file);
    r.out.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return r;
}

struct TempDir {
    fs::path prev = fs::current_path();
    TempDir() {
        fs::create_directories("cli_scratch");
        fs::current_path("cli_scratch");
    }
    ~TempDir() {
        fs::current_path(prev);
        fs::remove_all("cli_scratch");
    }
};

} // namespace

TEST_CASE("gen/recon/eval round trip") {
    TempDir tmp;
    CliRun g = cli("gen --out ds.cpid --height 32 --width 32 --coils 3 --r 2 --acs 4 "
                   "--sigma 0.01 --seed 9");
    CHECK(g.code == 0);
    CHECK(fs::exists("ds.cpid"));
    CHECK(fs::exists("ds.cpid.json"));

    CHECK(cli("recon --method cgsense --dataset ds.cpid --out rec --png").code == 0);
    CHECK(fs::exists("rec.cpimg"));
    CHECK(fs::exists("rec.pgm"));
    CHECK(fs::exists("rec.png"));

    CliRun e = cli("eval --dataset ds.cpid --recon rec.cpimg --out m");
    CHECK(e.code == 0);
    CHECK(fs::exists("m.csv"));
    CHECK(fs::exists("m.json"));
    CHECK(e.out.find("slice,psnr_db,ssim") != std::string::npos);
}

TEST_CASE("reference export reproduces the truth exactly (psnr sentinel)") {
    TempDir tmp;
    REQUIRE(cli("gen --out ds.cpid --height 32 --width 32 --coils 2 --r 1 --acs 4 --sigma 0 "
                "--seed 3").code == 0);
    REQUIRE(cli("recon --method reference --dataset ds.cpid --out ref").code == 0);
    CliRun e = cli("eval --dataset ds.cpid --recon ref.cpimg --out m");
    CHECK(e.code == 0);
    CHECK(e.out.find("inf") != std::string::npos);
}

TEST_CASE("fully sampled noiseless chain reproduces truth to float precision") {
    TempDir tmp;
    REQUIRE(cli("gen --out ds.cpid --height 32 --width 32 --coils 2 --r 1 --acs 4 --sigma 0 "
                "--seed 3").code == 0);
    REQUIRE(cli("recon --method cgsense --dataset ds.cpid --out rec").code == 0);
    CliRun e = cli("eval --dataset ds.cpid --recon rec.cpimg --out m");
    CHECK(e.code == 0);
    // the float32 payload quantizes y, so the chain lands at the storage
    // precision floor rather than the exact-equality sentinel
    const size_t pos = e.out.find("aggregate,");
    REQUIRE(pos != std::string::npos);
    const double agg = std::strtod(e.out.c_str() + pos + 10, nullptr);
    CHECK(agg > 120.0);
}

TEST_CASE("exit codes: usage 2, data 3") {
    TempDir tmp;
    CHECK(cli("recon --method bogus --dataset x.cpid").code == 2);
    CHECK(cli("recon --method cgsense --dataset missing.cpid").code == 3);
    CHECK(cli("nonsense").code == 2);
    // malformed file
    std::ofstream bad("bad.cpid", std::ios::binary);
    bad << "garbage";
    bad.close();
    CHECK(cli("recon --method cgsense --dataset bad.cpid").code == 3);
}

TEST_CASE("env seed override and config file defaults") {
    TempDir tmp;
    setenv("CUPID_SEED", "777", 1);
    REQUIRE(cli("gen --out a.cpid --height 16 --width 16 --coils 2 --r 2 --acs 4").code == 0);
    unsetenv("CUPID_SEED");
    REQUIRE(cli("gen --out b.cpid --height 16 --width 16 --coils 2 --r 2 --acs 4 --seed 777")
                .code == 0);
    cupid::DatasetFile a = cupid::read_dataset("a.cpid");
    cupid::DatasetFile b = cupid::read_dataset("b.cpid");
    CHECK(a == b);

    std::ofstream cfg("cfg.json");
    cfg << R"({"sigma": 0.05, "coils": 2})";
    cfg.close();
    REQUIRE(cli("gen --config cfg.json --out c.cpid --height 16 --width 16 --r 2 --acs 4 "
                "--seed 777").code == 0);
    cupid::DatasetFile c = cupid::read_dataset("c.cpid");
    CHECK(c.sigma == 0.05);
    CHECK(c.nc == 2);
}

TEST_CASE("zero-shot training emits a run dir and a usable checkpoint") {
    TempDir tmp;
    REQUIRE(cli("gen --out ds.cpid --height 16 --width 16 --coils 3 --r 2 --acs 4 "
                "--sigma 0.02 --seed 21").code == 0);
    CliRun t = cli("train --loss cupid --mode zeroshot --dataset ds.cpid --run-dir run "
                   "--epochs 2 --k 2 --unrolls 2 --blocks 1 --channels 4");
    CHECK(t.code == 0);
    CHECK(fs::exists("run/curve.csv"));
    CHECK(fs::exists("run/config.json"));
    CHECK(fs::exists("run/ckpt_final.bin"));
    CHECK(fs::exists("run/perturbations.bin"));
    CHECK(cli("recon --method model --ckpt run/ckpt_final.bin --dataset ds.cpid --out mrec")
              .code == 0);
    CHECK(fs::exists("mrec.cpimg"));
}

TEST_CASE("baseline losses run through the cli") {
    TempDir tmp;
    REQUIRE(cli("gen --out ds.cpid --height 16 --width 16 --coils 3 --r 2 --acs 4 "
                "--sigma 0.02 --seed 22").code == 0);
    for (const char* loss : {"supervised", "ssdu", "ei"}) {
        CliRun t = cli(std::string("train --loss ") + loss +
                       " --mode zeroshot --dataset ds.cpid --run-dir run_" + loss +
                       " --epochs 1 --unrolls 1 --blocks 1 --channels 4");
        CAPTURE(loss);
        CHECK(t.code == 0);
    }
}

TEST_CASE("ablate writes a summary table") {
    TempDir tmp;
    CliRun a = cli("ablate --sweep k --ks 1 --seeds 1 --epochs 1 --out abl --seed 5");
    CHECK(a.code == 0);
    CHECK(fs::exists("abl/summary.csv"));
    std::ifstream f("abl/summary.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "sweep,point,seed,psnr_input,psnr_output,ssim_output,seconds");
}
