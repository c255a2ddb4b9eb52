// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <agentml/cli.hpp>
#include <agentml/store.hpp>

#include <doctest.h>

#include <sstream>

using namespace agentml;
using agentml::test::kSourceDir;
using agentml::test::TempDir;

namespace
{
struct Run
{
    int code = -1;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "agentml");
    std::ostringstream out, err;
    Run r;
    r.code = cli_main(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::vector<Json> records(const fs::path& path)
{
    std::vector<Json> out;
    for (auto const& line: split_lines(read_file(path.string())))
        if (!line.empty())
            out.push_back(Json::parse(line));
    return out;
}

// A train suite, an expert store over it and an SFT policy.
struct Stage
{
    TempDir dir { "cli" };
    std::string tasks = (dir / "tasks").string();
    std::string scratch = (dir / "scratch").string();

    Stage()
    {
        REQUIRE(cli({ "make-tasks", "--out", tasks, "--seed", "11", "--n", "3", "--prefix", "syn-train" }).code == kExitOk);
        REQUIRE(cli({ "pool", "--out", (dir / "pool.json").string(), "--ideas", (kSourceDir / "data" / "ideas").string(), "--m",
                      "30", "--k", "6" })
                    .code
                == kExitOk);
    }

    Run collect(const std::string& out, const std::string& n = "12", const std::string& workers = "1")
    {
        return cli({ "collect", "--tasks", tasks, "--policy", "expert", "--pool", (dir / "pool.json").string(), "--n", n, "--seed",
                     "5", "--out", out, "--workers", workers, "--scratch", scratch });
    }
};
} // namespace

TEST_CASE("usage errors exit 2")
{
    CHECK(cli({}).code == kExitConfig);
    CHECK(cli({ "no-such-command" }).code == kExitConfig);
    CHECK(cli({ "eval" }).code == kExitConfig); // --tasks missing
    TempDir dir("usage");
    CHECK(cli({ "eval", "--tasks", dir.path().string() }).code == kExitConfig); // no bundles there
    CHECK(cli({ "--help" }).code == kExitOk);
}

TEST_CASE("make-tasks and pool write records with schema and digest")
{
    Stage s;
    auto const suite = records(s.dir / "tasks" / "suite.json").front();
    CHECK(suite.at("schema_version") == kSchemaVersion);
    CHECK(suite.at("tasks").size() == 3);
    CHECK(suite.at("config_digest").get<std::string>().size() == 16);
    auto const pool = records(s.dir / "pool.json").front();
    CHECK(pool.at("kind") == "action_pool");
    CHECK(pool.at("provenance").contains("config_digest"));
    CHECK(pool.at("provenance").at("selection") == "fps");
}

TEST_CASE("collect: n = 0 gives an empty store; runs are byte-identical")
{
    Stage s;
    auto const empty = s.dir / "empty.jsonl";
    CHECK(s.collect(empty.string(), "0").code == kExitOk);
    CHECK(fs::exists(empty));
    CHECK(read_file(empty.string()).empty());

    auto const a = s.dir / "a.jsonl";
    auto const b = s.dir / "b.jsonl";
    CHECK(s.collect(a.string()).code == kExitOk);
    CHECK(s.collect(b.string(), "12", "4").code == kExitOk);
    CHECK(sha256_hex(read_file(a.string())) == sha256_hex(read_file(b.string())));
    for (auto const& r: records(a))
    {
        CHECK(r.at("steps").size() <= 15);
        CHECK(!r.at("config_digest").get<std::string>().empty());
    }
}

TEST_CASE("sft on an empty store fails with EmptyDataset")
{
    Stage s;
    auto const empty = s.dir / "empty.jsonl";
    s.collect(empty.string(), "0");
    auto const r = cli({ "sft", "--store", empty.string(), "--tasks", s.tasks, "--out", (s.dir / "p.json").string() });
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("EmptyDataset") != std::string::npos);
}

TEST_CASE("train: curves and policies are byte-identical across runs and resume")
{
    Stage s;
    auto const store = (s.dir / "e.jsonl").string();
    REQUIRE(s.collect(store).code == kExitOk);
    auto const sft = (s.dir / "sft.json").string();
    REQUIRE(cli({ "sft", "--store", store, "--tasks", s.tasks, "--out", sft }).code == kExitOk);
    auto const sftRec = records(sft).front();
    CHECK(sftRec.at("kind") == "toy_policy");
    CHECK(sftRec.at("sft").at("loss_last").get<double>() < sftRec.at("sft").at("loss_first").get<double>());

    auto train = [&](const std::string& tag, const std::string& updates, std::vector<std::string> extra = {}) {
        std::vector<std::string> args { "train", "--store", store, "--tasks", s.tasks, "--init", sft, "--updates", updates,
                                        "--pool-states", "64", "--curve", (s.dir / (tag + ".curve")).string(), "--out",
                                        (s.dir / (tag + ".policy")).string(), "--scratch", s.scratch };
        args.insert(args.end(), extra.begin(), extra.end());
        return cli(args);
    };
    REQUIRE(train("a", "8").code == kExitOk);
    REQUIRE(train("b", "8").code == kExitOk);
    auto const curveA = read_file((s.dir / "a.curve").string());
    CHECK(curveA == read_file((s.dir / "b.curve").string()));
    CHECK(read_file((s.dir / "a.policy").string()) == read_file((s.dir / "b.policy").string()));
    auto const points = records(s.dir / "a.curve");
    REQUIRE(points.size() == 8);
    CHECK(points.back().at("update_index") == 7);
    CHECK(points.back().at("env_transitions") == 8 * 32);
    CHECK(points.back().at("wall_ms") == 0.0);

    auto const ck = (s.dir / "ck.json").string();
    REQUIRE(train("c", "4", { "--checkpoint", ck }).code == kExitOk);
    REQUIRE(train("c", "8", { "--resume", ck }).code == kExitOk);
    CHECK(read_file((s.dir / "c.curve").string()) == curveA);
    CHECK(read_file((s.dir / "c.policy").string()) == read_file((s.dir / "a.policy").string()));

    // A checkpoint from another configuration is refused.
    CHECK(train("d", "8", { "--resume", ck, "--clip", "0.3" }).code == kExitConfig);

    auto const replay = cli({ "replay", "--store", store, "--tasks", s.tasks, "--scratch", s.scratch });
    CHECK(replay.code == kExitOk);
    CHECK(replay.out.find("12 trajectories replayed, 0 mismatched") != std::string::npos);
}

TEST_CASE("eval: improver 100 -> 110 gives 0.10, final answer gives 0, worsener on a lower-is-better task is negative")
{
    TempDir dir("eval");
    test::scripted_task(dir / "up", "up-100", 1, 100.0, 120.0, { { "augment", 10.0 }, { "widen", -5.0 } });
    test::scripted_task(dir / "down", "down-rmse", -1, 1.0, 0.5, { { "augment", -0.1 }, { "widen", 0.2 } }, "RMSE");
    auto const scratch = (dir / "scratch").string();
    auto eval = [&](const std::string& tasks, const std::string& policy) {
        auto const out = (dir / (policy + ".jsonl")).string();
        auto const r = cli({ "eval", "--tasks", (dir / tasks).string(), "--policy", policy, "--k", "8", "--out", out, "--scratch", scratch });
        REQUIRE(r.code == kExitOk);
        return records(out);
    };
    auto const up = eval("up", "improver");
    REQUIRE(up.size() == 2);
    CHECK(up[0].at("m_avg") == 110.0);
    CHECK(up[0].at("delta_r").get<double>() == 0.10);
    CHECK(up[0].at("finals") == Json(std::vector<double>(8, 110.0)));
    CHECK(up[0].at("best_at_k").at("8") == 110.0);
    CHECK(up[1].at("average_delta_r").get<double>() == 0.10);

    auto const noop = eval("up", "final");
    CHECK(noop[0].at("delta_r").get<double>() == 0.0);

    auto const worse = eval("down", "worsener");
    CHECK(worse[0].at("beta") == -1);
    CHECK(worse[0].at("delta_r").get<double>() < 0.0);
    CHECK(worse[0].at("m_avg").get<double>() == doctest::Approx(1.2));
}

TEST_CASE("eval reports recompute exactly in the reference script")
{
    TempDir dir("recompute");
    REQUIRE(cli({ "make-tasks", "--out", (dir / "t").string(), "--seed", "97", "--n", "2" }).code == kExitOk);
    auto const out = (dir / "r.jsonl").string();
    REQUIRE(cli({ "eval", "--tasks", (dir / "t").string(), "--policy", "untrained", "--k", "16", "--out", out, "--scratch",
                  (dir / "s").string(), "--workers", "3" })
                .code
            == kExitOk);
    auto const cmd = "python3 " + (kSourceDir / "tools" / "recompute_report.py").string() + " " + out + " > /dev/null";
    CHECK(std::system(cmd.c_str()) == 0);

    // A report edited by hand no longer recomputes.
    auto text = read_file(out);
    auto const at = text.find("\"m_avg\":") + 8;
    text.insert(at, "1");
    write_file(out, text);
    CHECK(std::system(cmd.c_str()) != 0);
}

TEST_CASE("verify passes, and each injected mutation exits 1")
{
    CHECK(cli({ "verify" }).code == kExitOk);
    auto const reward = cli({ "verify", "--inject", "reward-denominator-sign" });
    CHECK(reward.code == kExitVerifyFailed);
    CHECK(reward.out.find("FAIL reward") != std::string::npos);
    auto const dist = cli({ "verify", "--inject", "distribution-off-by-one" });
    CHECK(dist.code == kExitVerifyFailed);
    CHECK(dist.out.find("FAIL state-identity") != std::string::npos);
    CHECK(cli({ "verify", "--inject", "nonsense" }).code == kExitConfig);
}

TEST_CASE("an unreachable remote policy exits 3")
{
    TempDir dir("remote");
    REQUIRE(cli({ "make-tasks", "--out", (dir / "t").string(), "--n", "1" }).code == kExitOk);
    auto const r = cli({ "eval", "--tasks", (dir / "t").string(), "--policy", "remote", "--endpoint", "http://127.0.0.1:9/v1",
                         "--timeout", "2", "--k", "1", "--scratch", (dir / "s").string() });
    CHECK(r.code == kExitTransport);
    CHECK(r.err.find("PolicyUnavailable") != std::string::npos);
    CHECK(cli({ "eval", "--tasks", (dir / "t").string(), "--policy", "remote" }).code == kExitConfig); // no endpoint
}
