#include "doctest.h"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(RFCN_CLI) + " " + args + " 2>&1";
    std::array<char, 4096> buf;
    RunResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) res.output += buf.data();
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "rfcn_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string synth_args(const fs::path& out) {
    return "synth --out " + out.string() +
           " --seqs 2 --len 8 --canvas 16x16 --sprites 1 --vel-min 1 --vel-max 1 --seed 7";
}

}  // namespace

TEST_CASE("synth writes the requested sequences deterministically") {
    fs::path a = work_dir() / "synth_a";
    fs::path b = work_dir() / "synth_b";
    RunResult ra = run(synth_args(a));
    CHECK(ra.exit_code == 0);
    int dirs = 0;
    for (int s = 0; s < 2; ++s) {
        char name[16];
        std::snprintf(name, sizeof(name), "seq_%03d", s);
        fs::path sd = a / name;
        REQUIRE(fs::is_directory(sd));
        ++dirs;
        int frames = 0, masks = 0;
        for (const auto& e : fs::directory_iterator(sd / "frames")) {
            (void)e;
            ++frames;
        }
        for (const auto& e : fs::directory_iterator(sd / "masks")) {
            (void)e;
            ++masks;
        }
        CHECK(frames == 8);
        CHECK(masks == 8);
    }
    CHECK(dirs == 2);
    CHECK(fs::exists(a / "config.cfg"));
    CHECK(fs::exists(a / "manifest.cfg"));

    RunResult rb = run(synth_args(b));
    CHECK(rb.exit_code == 0);
    CHECK(slurp(a / "seq_000" / "frames" / "0003.pgm") ==
          slurp(b / "seq_000" / "frames" / "0003.pgm"));
    CHECK(slurp(a / "seq_001" / "masks" / "0007.pgm") ==
          slurp(b / "seq_001" / "masks" / "0007.pgm"));
}

TEST_CASE("synth rejects a zero length with a usage error") {
    RunResult r = run("synth --out " + (work_dir() / "synth_bad").string() + " --len 0");
    CHECK(r.exit_code == 1);
}

TEST_CASE("train produces checkpoint, history, and a reusable config") {
    fs::path data = work_dir() / "synth_a";
    if (!fs::exists(data)) {
        REQUIRE(run(synth_args(data)).exit_code == 0);
    }
    fs::path out = work_dir() / "train_a";
    RunResult r = run("train --preset rfc-lenet --scale 0.25 --input 16x16 --data " +
                      data.string() + " --out " + out.string() +
                      " --epochs 2 --seed 11 --split half");
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out / "checkpoint.ckpt"));
    CHECK(fs::exists(out / "history.jsonl"));
    CHECK(fs::exists(out / "config.cfg"));

    // Two history lines with the expected keys.
    std::ifstream hist(out / "history.jsonl");
    std::string line;
    int lines = 0;
    double last_f = -1.0;
    while (std::getline(hist, line)) {
        json j = json::parse(line);
        CHECK(j.contains("epoch"));
        CHECK(j.contains("loss"));
        CHECK(j.contains("precision"));
        CHECK(j.contains("recall"));
        CHECK(j.contains("f_measure"));
        CHECK(j.contains("iou"));
        last_f = j["f_measure"].get<double>();
        ++lines;
    }
    CHECK(lines == 2);

    // Evaluating the checkpoint on the same held-out split reproduces the
    // final logged F-measure.
    RunResult ev = run("eval --checkpoint " + (out / "checkpoint.ckpt").string() + " --data " +
                       data.string() + " --split half --part test --seed 11");
    CHECK(ev.exit_code == 0);
    json j = json::parse(ev.output);
    CHECK(j["f_measure"].get<double>() >= last_f - 1e-9);
    CHECK(j["f_measure"].get<double>() <= last_f + 1e-9);
}

TEST_CASE("training runs are reproducible from their resolved config") {
    fs::path data = work_dir() / "synth_a";
    fs::path out1 = work_dir() / "train_a";
    if (!fs::exists(out1 / "config.cfg")) {
        REQUIRE(run(synth_args(data)).exit_code == 0);
        REQUIRE(run("train --preset rfc-lenet --scale 0.25 --input 16x16 --data " +
                    data.string() + " --out " + out1.string() +
                    " --epochs 2 --seed 11 --split half")
                    .exit_code == 0);
    }
    fs::path out2 = work_dir() / "train_b";
    // Replay from the provenance copy; only the destination changes.
    RunResult r = run("train --config " + (out1 / "config.cfg").string() + " --out " +
                      out2.string());
    CHECK(r.exit_code == 0);
    CHECK(slurp(out1 / "checkpoint.ckpt") == slurp(out2 / "checkpoint.ckpt"));
    CHECK(slurp(out1 / "history.jsonl") == slurp(out2 / "history.jsonl"));
}

TEST_CASE("eval can dump one mask per window") {
    fs::path data = work_dir() / "synth_a";
    fs::path train_out = work_dir() / "train_a";
    fs::path masks = work_dir() / "masks";
    RunResult r = run("eval --checkpoint " + (train_out / "checkpoint.ckpt").string() +
                      " --data " + data.string() +
                      " --split half --part test --dump-masks --out " + masks.string());
    CHECK(r.exit_code == 0);
    int count = 0;
    for (const auto& e : fs::directory_iterator(masks)) {
        CHECK(e.path().extension() == ".pgm");
        ++count;
    }
    // 2 sequences, test halves of length 4, L=3: 2 windows each.
    CHECK(count == 4);
}

TEST_CASE("predict writes a mask for a single window") {
    fs::path data = work_dir() / "synth_a";
    fs::path train_out = work_dir() / "train_a";
    fs::path mask = work_dir() / "pred.pgm";
    std::string frames;
    for (int i = 0; i < 3; ++i) {
        frames += (data / "seq_000" / "frames" / ("000" + std::to_string(i) + ".pgm")).string();
        frames += " ";
    }
    RunResult r = run("predict --checkpoint " + (train_out / "checkpoint.ckpt").string() +
                      " --frames " + frames + "--out " + mask.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(mask));

    RunResult wrong = run("predict --checkpoint " + (train_out / "checkpoint.ckpt").string() +
                          " --frames " + (data / "seq_000/frames/0000.pgm").string() + " --out " +
                          mask.string());
    CHECK(wrong.exit_code == 1);
}

TEST_CASE("unknown preset lists the valid names") {
    RunResult r = run("train --preset resnet --data x --out y");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("rfc-lenet") != std::string::npos);
    CHECK(r.output.find("fc-vgg") != std::string::npos);
}

TEST_CASE("decoupled mode requires the baseline checkpoint") {
    fs::path data = work_dir() / "synth_a";
    RunResult r = run("train --preset rfc-lenet --scale 0.25 --input 16x16 --data " +
                      data.string() + " --out " + (work_dir() / "dc").string() +
                      " --epochs 1 --mode decoupled");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("fc-checkpoint") != std::string::npos);
}

TEST_CASE("decoupled training from a baseline checkpoint works end to end") {
    fs::path data = work_dir() / "synth_a";
    fs::path fc_out = work_dir() / "fc";
    RunResult fc = run("train --preset fc-lenet --scale 0.25 --input 16x16 --data " +
                       data.string() + " --out " + fc_out.string() + " --epochs 1 --seed 3");
    REQUIRE(fc.exit_code == 0);
    fs::path dc_out = work_dir() / "dc2";
    RunResult dc = run("train --preset rfc-lenet --scale 0.25 --input 16x16 --data " +
                       data.string() + " --out " + dc_out.string() +
                       " --epochs 1 --seed 4 --mode decoupled --fc-checkpoint " +
                       (fc_out / "checkpoint.ckpt").string());
    CHECK(dc.exit_code == 0);
    CHECK(fs::exists(dc_out / "checkpoint.ckpt"));
}

TEST_CASE("gradcheck filter and fault injection") {
    RunResult ok = run("gradcheck --component sigmoid");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("sigmoid") != std::string::npos);
    CHECK(ok.output.find("pass") != std::string::npos);

    RunResult bad = run("gradcheck --component sigmoid --inject-fault sigmoid");
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("gradient check failed: sigmoid") != std::string::npos);

    RunResult none = run("gradcheck --component nonesuch");
    CHECK(none.exit_code == 1);
}

TEST_CASE("inspect prints all six presets by default") {
    RunResult r = run("inspect");
    CHECK(r.exit_code == 0);
    for (const char* name : {"rfc-lenet", "rfc-12s", "rfc-vgg", "fc-lenet", "fc-12s", "fc-vgg"}) {
        CHECK(r.output.find(std::string("== ") + name) != std::string::npos);
    }
    CHECK(r.output.find("output (1x28x28)") != std::string::npos);
    CHECK(r.output.find("output (1x240x360)") != std::string::npos);

    RunResult emit = run("inspect --preset rfc-lenet --emit-config");
    CHECK(emit.exit_code == 0);
    CHECK(emit.output.find("@recurrent-node-begin") != std::string::npos);
    CHECK(emit.output.find("gru") != std::string::npos);

    // Missing dataset directory is an I/O error (exit 2).
    RunResult io = run("eval --checkpoint nowhere.ckpt --data nowhere");
    CHECK(io.exit_code == 2);
}
