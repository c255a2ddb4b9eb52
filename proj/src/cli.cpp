// SPDX-License-Identifier: Apache-2.0
#include <agentml/cli.hpp>

#include <agentml/pipeline.hpp>
#include <agentml/policies.hpp>
#include <agentml/trainer.hpp>
#include <agentml/verify.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>

namespace agentml
{

namespace
{
    // Backend endpoints shared by several commands.
    struct Endpoint
    {
        std::string url;
        std::string model;
        double temperature = 0.0;
        double timeout = 120.0;

        [[nodiscard]] EndpointConfig config() const
        {
            if (url.empty())
                throw Error(ErrorCode::ConfigInvalid, "a remote backend needs an endpoint url");
            EndpointConfig c;
            c.url = url;
            c.model = model;
            c.temperature = temperature;
            c.timeout = Seconds(timeout);
            return c;
        }
        [[nodiscard]] Json to_json() const { return url.empty() ? Json() : config().to_json(); }
    };

    void add_endpoint(CLI::App& cmd, Endpoint& e, const std::string& prefix, const std::string& what)
    {
        cmd.add_option("--" + prefix + "endpoint", e.url, what + " API base url (chat-completion style)");
        cmd.add_option("--" + prefix + "model", e.model, what + " model name");
        if (prefix.empty())
            cmd.add_option("--temperature", e.temperature, "sampling temperature for the remote policy");
        cmd.add_option("--" + prefix + "timeout", e.timeout, "request timeout in seconds");
    }

    struct PolicyChoice
    {
        std::string spec = "expert"; // expert|improver|worsener|final|untrained|toy:<file>|remote
        Endpoint endpoint;
    };

    struct TransformerChoice
    {
        std::string kind = "stub";
        Endpoint endpoint;
    };

    Json read_json_file(const fs::path& path)
    {
        std::string text;
        try
        {
            text = read_file(path.string());
        }
        catch (const std::exception& e)
        {
            throw Error(ErrorCode::ConfigInvalid, fmt::format("cannot read {}: {}", path.string(), e.what()));
        }
        try
        {
            return Json::parse(text);
        }
        catch (const Json::exception& e)
        {
            throw Error(ErrorCode::SchemaViolation, fmt::format("{} is not JSON: {}", path.string(), e.what()));
        }
    }

    std::string file_digest(const fs::path& path)
    {
        std::error_code ec;
        if (!fs::exists(path, ec))
            return "";
        return sha256_hex(read_file(path.string()));
    }

    Json policy_record(const ToyPolicy& policy, const std::string& digest)
    {
        return Json { { "schema_version", kSchemaVersion },
                      { "kind", "toy_policy" },
                      { "config_digest", digest },
                      { "policy", to_json(policy) } };
    }

    ToyPolicy load_policy(const fs::path& path)
    {
        auto const r = read_json_file(path);
        if (r.value("kind", "") != "toy_policy" || r.value("schema_version", 0) != kSchemaVersion)
            throw Error(ErrorCode::SchemaViolation, fmt::format("{} is not a toy policy record", path.string()));
        return toy_policy_from_json(r.at("policy"));
    }

    void write_json_line(const fs::path& path, const Json& record)
    {
        if (path.has_parent_path())
            fs::create_directories(path.parent_path());
        write_file(path.string(), record.dump() + "\n");
    }

    // A factory for the chosen policy. Toy policies are loaded once and
    // shared read-only between workers.
    BackendFactory policy_factory(const PolicyChoice& choice)
    {
        auto const& s = choice.spec;
        if (s == "expert")
            return [] { return std::make_unique<ExpertBackend>(); };
        if (s == "improver")
            return [] { return std::make_unique<ImproverBackend>(); };
        if (s == "worsener")
            return [] { return std::make_unique<WorsenerBackend>(); };
        if (s == "final")
            return [] { return std::make_unique<FinalAnswerBackend>(); };
        if (s == "untrained" || s.starts_with("toy:"))
        {
            auto policy = std::make_shared<ToyPolicy>(s == "untrained" ? ToyPolicy {} : load_policy(s.substr(4)));
            return [policy, s]() -> std::unique_ptr<PolicyBackend> { return std::make_unique<ToyPolicyBackend>(*policy, s); };
        }
        if (s == "remote")
        {
            auto const config = choice.endpoint.config();
            return [config] { return std::make_unique<RemoteBackend>(config); };
        }
        throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown policy '{}'", s));
    }

    Json policy_json(const PolicyChoice& choice)
    {
        Json j { { "spec", choice.spec } };
        if (choice.spec.starts_with("toy:"))
            j["sha256"] = file_digest(choice.spec.substr(4));
        if (choice.spec == "remote")
            j["endpoint"] = choice.endpoint.to_json();
        return j;
    }

    TransformerFactory transformer_factory(const TransformerChoice& choice)
    {
        if (choice.kind == "stub")
            return [] { return std::make_unique<StubTransformer>(); };
        if (choice.kind == "remote")
        {
            auto const config = choice.endpoint.config();
            return [config] { return std::make_unique<RemoteTransformer>(config); };
        }
        throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown transformer '{}'", choice.kind));
    }

    Json transformer_json(const TransformerChoice& choice)
    {
        return Json { { "kind", choice.kind }, { "endpoint", choice.kind == "remote" ? choice.endpoint.to_json() : Json() } };
    }

    std::vector<TaskPtr> load_tasks(const fs::path& dir)
    {
        auto tasks = load_task_dir(dir);
        if (tasks.empty())
            throw Error(ErrorCode::ConfigInvalid, fmt::format("no task bundles under {}", dir.string()));
        return tasks;
    }

    fs::path default_scratch() { return fs::temp_directory_path() / "agentml"; }

    // ---- make-tasks -------------------------------------------------------

    struct MakeTasksArgs
    {
        fs::path out;
        std::uint64_t seed = 1;
        int n = 6;
        std::string prefix = "syn";
        double noise = 0.05;
    };

    int make_tasks(const MakeTasksArgs& a, std::ostream& out)
    {
        SyntheticSuiteConfig c;
        c.seed = a.seed;
        c.n_tasks = a.n;
        c.id_prefix = a.prefix;
        c.noise = a.noise;
        if (a.n < 1)
            throw Error(ErrorCode::ConfigInvalid, "--n must be at least 1");
        Json const config { { "command", "make-tasks" }, { "seed", a.seed }, { "n", a.n }, { "prefix", a.prefix }, { "noise", a.noise } };
        auto const digest = config_digest(config);
        auto const tasks = make_synthetic_suite(c, a.out);
        Json ids = Json::array();
        for (auto const& t: tasks)
            ids.push_back(t->task_id);
        write_json_line(a.out / "suite.json",
                        Json { { "schema_version", kSchemaVersion },
                               { "kind", "task_suite" },
                               { "config", config },
                               { "config_digest", digest },
                               { "tasks", ids } });
        out << fmt::format("wrote {} task bundle(s) under {}\n", tasks.size(), a.out.string());
        return kExitOk;
    }

    // ---- pool -------------------------------------------------------------

    struct PoolArgs
    {
        fs::path out;
        fs::path ideas;
        Endpoint generator;
        fs::path task; // task bundle whose problem and script prompt a remote generator
        std::string embedder = "hash";
        Endpoint embed;
        std::size_t dim = 64;
        std::size_t m = 100;
        std::size_t k = 10;
        std::string selection = "fps";
    };

    int cmd_pool(const PoolArgs& a, std::ostream& out, std::ostream& err)
    {
        std::unique_ptr<IdeaGenerator> generator;
        Json genJson;
        if (!a.ideas.empty())
        {
            generator = std::make_unique<FixtureGenerator>(a.ideas);
            genJson = Json { { "kind", "fixture" }, { "dir", a.ideas.filename().string() } };
        }
        else if (!a.generator.url.empty())
        {
            if (a.task.empty())
                throw Error(ErrorCode::ConfigInvalid, "a remote idea generator needs --task for its prompt");
            auto const task = load_task(a.task);
            generator = std::make_unique<RemoteGenerator>(a.generator.config(),
                                                          task.research_problem,
                                                          read_file((task.bundle_root / task.train_script).string()));
            genJson = Json { { "kind", "remote" }, { "endpoint", a.generator.to_json() }, { "task", task.task_id } };
        }
        else
            throw Error(ErrorCode::ConfigInvalid, "give either --ideas DIR or --generator-endpoint URL");

        std::unique_ptr<Embedder> embedder;
        if (a.embedder == "hash")
            embedder = std::make_unique<HashEmbedder>(a.dim);
        else if (a.embedder == "remote")
            embedder = std::make_unique<RemoteEmbedder>(a.embed.config());
        else
            throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown embedder '{}'", a.embedder));

        PoolBuildConfig c;
        c.m = a.m;
        c.k = a.k;
        c.selection = selection_from_string(a.selection);
        Json const config { { "command", "pool" },
                            { "generator", genJson },
                            { "embedder", a.embedder == "hash" ? Json { { "kind", "hash" }, { "dim", a.dim } }
                                                               : Json { { "kind", "remote" }, { "endpoint", a.embed.to_json() } } },
                            { "m", a.m },
                            { "k", a.k },
                            { "selection", a.selection } };
        auto pool = build_action_pool(*generator, *embedder, c);
        pool.provenance["config_digest"] = config_digest(config);
        write_json_line(a.out, pool.to_json());
        for (auto const& [axis, ideas]: pool.axes)
            out << fmt::format("{}: {} ideas\n", to_string(axis), ideas.size());
        auto const per = pool.provenance.value("per_axis", Json::object());
        for (auto const& [axis, stats]: per.items())
            if (stats.value("duplicates", 0) > 0)
                err << fmt::format("{}: {} duplicate candidate(s) dropped\n", axis, stats.value("duplicates", 0));
        out << fmt::format("pool {} written to {}\n", pool.digest().substr(0, 16), a.out.string());
        return kExitOk;
    }

    ActionPool load_pool(const fs::path& path) { return ActionPool::from_json(read_json_file(path)); }

    // ---- collect ----------------------------------------------------------

    struct CollectArgs
    {
        fs::path tasks;
        PolicyChoice policy;
        TransformerChoice transformer;
        fs::path pool;
        std::size_t n = 0;
        std::uint64_t seed = 1;
        fs::path out;
        std::size_t workers = 1;
        fs::path scratch = default_scratch();
        bool no_clamp = false;
    };

    int cmd_collect(const CollectArgs& a, std::ostream& out, std::ostream& err)
    {
        auto const tasks = load_tasks(a.tasks);
        std::optional<ActionPool> pool;
        if (!a.pool.empty())
            pool = load_pool(a.pool);
        Json const config { { "command", "collect" },
                            { "tasks", a.tasks.string() },
                            { "policy", policy_json(a.policy) },
                            { "transformer", transformer_json(a.transformer) },
                            { "pool", pool ? Json(pool->digest()) : Json() },
                            { "n", a.n },
                            { "seed", a.seed },
                            { "clamp", !a.no_clamp } };
        CollectConfig c;
        c.n_trajectories = a.n;
        c.seed = a.seed;
        c.workers = a.workers;
        c.episode.scratch_root = a.scratch;
        c.episode.clamp.enabled = !a.no_clamp;
        c.episode.config_digest = config_digest(config);
        if (a.out.has_parent_path())
            fs::create_directories(a.out.parent_path());
        TrajectoryStore store(a.out);
        if (a.n == 0)
        {
            // An empty store is still a valid store.
            std::ofstream touch(a.out, std::ios::app);
        }
        auto const summary = collect_trajectories(
            tasks, policy_factory(a.policy), transformer_factory(a.transformer), pool ? &*pool : nullptr, c, store);
        for (auto const& e: summary.errors)
            err << e << "\n";
        out << fmt::format("collected {} trajectories ({} steps), {} failed, into {}\n",
                           summary.written,
                           summary.steps,
                           summary.failed,
                           a.out.string());
        return kExitOk;
    }

    // ---- sft --------------------------------------------------------------

    struct SftArgs
    {
        fs::path store;
        fs::path tasks;
        int steps = 150;
        double lr = 0.05;
        fs::path init;
        fs::path out;
    };

    int cmd_sft(const SftArgs& a, std::ostream& out)
    {
        auto const tasks = load_tasks(a.tasks);
        auto const stored = TrajectoryStore(a.store).read_all();
        TaskCatalog const catalog(tasks);
        std::size_t skipped = 0;
        auto const targets = sft_targets(build_sft_dataset(stored, catalog), &skipped);
        if (targets.empty())
            throw Error(ErrorCode::EmptyDataset, fmt::format("no usable SFT examples in {}", a.store.string()));
        if (a.steps < 1 || !(a.lr > 0.0))
            throw Error(ErrorCode::ConfigInvalid, "--steps must be positive and --lr > 0");
        ToyPolicy policy = a.init.empty() ? ToyPolicy {} : load_policy(a.init);
        Json const config { { "command", "sft" },
                            { "store", file_digest(a.store) },
                            { "tasks", a.tasks.string() },
                            { "steps", a.steps },
                            { "lr", a.lr },
                            { "init", a.init.empty() ? Json() : Json(file_digest(a.init)) } };
        auto const losses = sft_train(policy, targets, a.steps, a.lr);
        auto record = policy_record(policy, config_digest(config));
        record["sft"] = Json { { "examples", targets.size() }, { "skipped", skipped }, { "loss_first", losses.front() }, { "loss_last", losses.back() } };
        write_json_line(a.out, record);
        out << fmt::format("sft on {} examples ({} skipped): loss {:.4f} -> {:.4f}; policy written to {}\n",
                           targets.size(),
                           skipped,
                           losses.front(),
                           losses.back(),
                           a.out.string());
        return kExitOk;
    }

    // ---- train ------------------------------------------------------------

    struct TrainArgs
    {
        std::string mode = "stepwise";
        fs::path store;
        fs::path tasks;
        fs::path init;
        fs::path reference;
        std::size_t pool_states = 256;
        std::uint64_t pool_seed = 3;
        std::string weighting = "uniform";
        int updates = 60;
        PPOConfig ppo;
        std::string advantage = "reward_minus_value";
        bool no_kl = false;
        bool no_memo = false;
        bool no_clamp = false;
        bool track_objective = false;
        bool timing = false;
        fs::path curve;
        fs::path checkpoint;
        int checkpoint_every = 0;
        fs::path resume;
        fs::path out;
        fs::path scratch = default_scratch();
    };

    int cmd_train(TrainArgs a, std::ostream& out)
    {
        auto const mode = train_mode_from_string(a.mode);
        auto const tasks = load_tasks(a.tasks);
        TaskCatalog const catalog(tasks);
        a.ppo.advantage = advantage_mode_from_string(a.advantage);
        a.ppo.kl_enabled = !a.no_kl;
        a.ppo.validate();
        if (a.updates < 0)
            throw Error(ErrorCode::ConfigInvalid, "--updates must be non-negative");

        TrainerInputs inputs;
        inputs.tasks = tasks;
        if (!a.store.empty())
        {
            auto const stored = TrajectoryStore(a.store).read_all();
            Rng rng(a.pool_seed);
            StatePoolOptions po;
            po.weighting = pool_weighting_from_string(a.weighting);
            inputs.pool = build_state_pool(stored, catalog, a.pool_states, rng, po);
        }
        else if (mode == TrainMode::Stepwise)
            throw Error(ErrorCode::ConfigInvalid, "step-wise training needs --store to draw its state pool from");

        ToyPolicy const initial = a.init.empty() ? ToyPolicy {} : load_policy(a.init);
        std::optional<ToyPolicy> reference;
        if (!a.reference.empty())
            reference = load_policy(a.reference);

        Json const config { { "command", "train" },
                            { "mode", a.mode },
                            { "store", a.store.empty() ? Json() : Json(file_digest(a.store)) },
                            { "tasks", a.tasks.string() },
                            { "init", a.init.empty() ? Json() : Json(file_digest(a.init)) },
                            { "reference", a.reference.empty() ? Json() : Json(file_digest(a.reference)) },
                            { "pool_states", a.pool_states },
                            { "pool_seed", a.pool_seed },
                            { "weighting", a.weighting },
                            { "ppo", a.ppo.to_json() },
                            { "memoize", !a.no_memo },
                            { "clamp", !a.no_clamp },
                            { "track_objective", a.track_objective },
                            { "timing", a.timing } };
        // The update count is left out so a resumed run can extend a shorter one.
        auto const digest = config_digest(config);

        TrainerOptions options;
        options.episode.scratch_root = a.scratch;
        options.episode.clamp.enabled = !a.no_clamp;
        options.episode.config_digest = digest;
        options.memoize = !a.no_memo;
        options.track_objective = a.track_objective;
        options.record_timing = a.timing;

        StubTransformer transformer;
        Trainer trainer(a.ppo, mode, inputs, transformer, options, initial, reference);
        bool const resuming = !a.resume.empty();
        if (resuming)
        {
            auto const ck = read_json_file(a.resume);
            if (ck.value("config_digest", "") != digest)
                throw Error(ErrorCode::ConfigInvalid, "checkpoint was written under a different configuration");
            trainer.restore(ck);
        }

        std::ofstream curve;
        if (!a.curve.empty())
        {
            if (a.curve.has_parent_path())
                fs::create_directories(a.curve.parent_path());
            curve.open(a.curve, resuming ? std::ios::app : std::ios::trunc);
            if (!curve)
                throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", a.curve.string()));
        }
        auto save_checkpoint = [&] {
            if (a.checkpoint.empty())
                return;
            auto ck = trainer.checkpoint();
            ck["config_digest"] = digest;
            write_json_line(a.checkpoint, ck);
        };
        auto const remaining = std::max(0, a.updates - trainer.updates_done());
        for (int u = 0; u < remaining; ++u)
        {
            auto const point = trainer.update();
            if (curve)
            {
                auto rec = point.to_json();
                rec["config_digest"] = digest;
                curve << rec.dump() << "\n";
                curve.flush();
            }
            out << fmt::format("update {:>4}  mean reward {:+.4f}  transitions {}{}\n",
                               point.update_index,
                               point.mean_reward,
                               point.env_transitions,
                               point.pool_objective ? fmt::format("  objective {:+.4f}", *point.pool_objective) : "");
            if (a.checkpoint_every > 0 && trainer.updates_done() % a.checkpoint_every == 0)
                save_checkpoint();
        }
        save_checkpoint();
        if (!a.out.empty())
            write_json_line(a.out, policy_record(trainer.policy(), digest));
        out << fmt::format("{} updates done, {} env transitions\n", trainer.updates_done(), trainer.transitions());
        return kExitOk;
    }

    // ---- eval -------------------------------------------------------------

    struct EvalArgs
    {
        fs::path tasks;
        std::vector<std::string> task_ids;
        PolicyChoice policy;
        TransformerChoice transformer;
        std::size_t k = 8;
        std::uint64_t seed = 1;
        std::size_t workers = 1;
        fs::path out;
        fs::path trajectories;
        fs::path scratch = default_scratch();
        bool no_clamp = false;
    };

    int cmd_eval(const EvalArgs& a, std::ostream& out)
    {
        auto tasks = load_tasks(a.tasks);
        if (!a.task_ids.empty())
        {
            TaskCatalog const catalog(tasks);
            tasks.clear();
            for (auto const& id: a.task_ids)
                tasks.push_back(catalog.at(id));
        }
        Json ids = Json::array();
        for (auto const& t: tasks)
            ids.push_back(t->task_id);
        Json const config { { "command", "eval" },
                            { "tasks", a.tasks.string() },
                            { "task_ids", ids },
                            { "policy", policy_json(a.policy) },
                            { "transformer", transformer_json(a.transformer) },
                            { "k", a.k },
                            { "seed", a.seed },
                            { "clamp", !a.no_clamp } };
        auto const digest = config_digest(config);
        EpisodeOptions options;
        options.scratch_root = a.scratch;
        options.clamp.enabled = !a.no_clamp;
        options.config_digest = digest;

        std::optional<TrajectoryStore> store;
        if (!a.trajectories.empty())
        {
            if (a.trajectories.has_parent_path())
                fs::create_directories(a.trajectories.parent_path());
            std::ofstream(a.trajectories, std::ios::trunc);
            store.emplace(a.trajectories);
        }
        auto const makePolicy = policy_factory(a.policy);
        auto const makeTransformer = transformer_factory(a.transformer);
        std::vector<TaskEval> evals;
        for (std::size_t i = 0; i < tasks.size(); ++i)
            evals.push_back(evaluate_task(tasks[i],
                                          makePolicy,
                                          makeTransformer,
                                          a.k,
                                          derive_seed(a.seed, i),
                                          options,
                                          a.workers,
                                          [&](const Trajectory& t) {
                                              if (store)
                                                  store->append(t);
                                          }));
        auto const report = make_report(std::move(evals), digest);
        if (!a.out.empty())
        {
            if (a.out.has_parent_path())
                fs::create_directories(a.out.parent_path());
            write_file(a.out.string(), report.to_jsonl());
        }
        out << report.format_table();
        return kExitOk;
    }

    // ---- verify -----------------------------------------------------------

    int cmd_verify(const std::string& inject, std::ostream& out)
    {
        auto const mutation = mutation_from_string(inject);
        if (mutation != Mutation::None)
            out << fmt::format("injected mutation: {}\n", to_string(mutation));
        bool ok = true;
        for (auto const& r: run_verify_suites(mutation))
        {
            out << fmt::format("{} {:<20} {:>6} case(s)  {}\n", r.passed() ? "PASS" : "FAIL", r.name, r.cases, r.detail);
            ok = ok && r.passed();
        }
        out << (ok ? "all suites passed\n" : "verification failed\n");
        return ok ? kExitOk : kExitVerifyFailed;
    }

    // ---- replay -----------------------------------------------------------

    struct ReplayArgs
    {
        fs::path store;
        fs::path tasks;
        std::vector<std::string> ids;
        fs::path scratch = default_scratch();
    };

    int cmd_replay(const ReplayArgs& a, std::ostream& out)
    {
        auto const tasks = load_tasks(a.tasks);
        TaskCatalog const catalog(tasks);
        auto const stored = TrajectoryStore(a.store).read_all();
        StubTransformer transformer;
        std::size_t checked = 0, bad = 0;
        for (auto const& s: stored)
        {
            if (!a.ids.empty() && std::find(a.ids.begin(), a.ids.end(), s.id) == a.ids.end())
                continue;
            ++checked;
            EpisodeOptions options;
            options.scratch_root = a.scratch;
            options.clamp = RewardClamp { s.trajectory->clamp };
            try
            {
                replay_prefix(episode_task(catalog, *s.trajectory), *s.trajectory, s.trajectory->steps.size(), transformer, options);
                out << fmt::format("ok       {} ({} steps)\n", s.id, s.trajectory->steps.size());
            }
            catch (const Error& e)
            {
                if (e.code() != ErrorCode::EnvReplayFailure)
                    throw;
                ++bad;
                out << fmt::format("mismatch {}: {}\n", s.id, e.what());
            }
        }
        out << fmt::format("{} trajectories replayed, {} mismatched\n", checked, bad);
        return bad == 0 ? kExitOk : kExitVerifyFailed;
    }
} // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app { "Agentic ML training harness: tasks, idea pools, expert collection, SFT, step-wise PPO and evaluation." };
    app.name("agentml");
    app.require_subcommand(1);

    MakeTasksArgs mk;
    auto* c_mk = app.add_subcommand("make-tasks", "write a synthetic task suite");
    c_mk->add_option("--out", mk.out, "directory for the bundles")->required();
    c_mk->add_option("--seed", mk.seed, "suite seed");
    c_mk->add_option("--n", mk.n, "number of tasks");
    c_mk->add_option("--prefix", mk.prefix, "task id prefix");
    c_mk->add_option("--noise", mk.noise, "task-level spread around the shared prior");

    PoolArgs po;
    auto* c_pool = app.add_subcommand("pool", "build the exploration idea pool");
    c_pool->add_option("--out", po.out, "pool file")->required();
    c_pool->add_option("--ideas", po.ideas, "fixture directory with data.txt, model.txt, learning.txt");
    add_endpoint(*c_pool, po.generator, "generator-", "idea generator");
    c_pool->add_option("--task", po.task, "task bundle that the remote generator is prompted with");
    c_pool->add_option("--embedder", po.embedder, "hash or remote");
    add_endpoint(*c_pool, po.embed, "embed-", "embedding");
    c_pool->add_option("--dim", po.dim, "hash embedding dimension");
    c_pool->add_option("--m", po.m, "candidates per axis");
    c_pool->add_option("--k", po.k, "ideas kept per axis");
    c_pool->add_option("--selection", po.selection, "fps or avgdist");

    auto add_policy = [](CLI::App* cmd, PolicyChoice& p) {
        cmd->add_option("--policy", p.spec, "expert, improver, worsener, final, untrained, toy:<policy.json> or remote");
        add_endpoint(*cmd, p.endpoint, "", "remote policy");
    };
    auto add_transformer = [](CLI::App* cmd, TransformerChoice& t) {
        cmd->add_option("--transformer", t.kind, "stub or remote (the coder model behind Edit Script and Understand File)");
        add_endpoint(*cmd, t.endpoint, "transform-", "coder model");
    };

    CollectArgs co;
    auto* c_collect = app.add_subcommand("collect", "collect trajectories into a store");
    c_collect->add_option("--tasks", co.tasks, "task directory")->required();
    add_policy(c_collect, co.policy);
    add_transformer(c_collect, co.transformer);
    c_collect->add_option("--pool", co.pool, "idea pool for exploration prefixes");
    c_collect->add_option("--n", co.n, "number of trajectories");
    c_collect->add_option("--seed", co.seed, "collection seed");
    c_collect->add_option("--out", co.out, "trajectory store (appended to)")->required();
    c_collect->add_option("--workers", co.workers, "parallel episodes");
    c_collect->add_option("--scratch", co.scratch, "workspace root");
    c_collect->add_flag("--no-clamp", co.no_clamp, "do not clamp edit rewards to [-1, 1]");

    SftArgs sf;
    auto* c_sft = app.add_subcommand("sft", "fine-tune the toy policy on stored trajectories");
    c_sft->add_option("--store", sf.store, "trajectory store")->required();
    c_sft->add_option("--tasks", sf.tasks, "task directory")->required();
    c_sft->add_option("--steps", sf.steps, "full-batch Adam steps");
    c_sft->add_option("--lr", sf.lr, "Adam step size");
    c_sft->add_option("--init", sf.init, "starting policy");
    c_sft->add_option("--out", sf.out, "policy file")->required();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "PPO on the toy policy, step-wise or episode-wise");
    c_train->add_option("--mode", tr.mode, "stepwise or episodewise");
    c_train->add_option("--store", tr.store, "expert store the state pool is drawn from");
    c_train->add_option("--tasks", tr.tasks, "task directory")->required();
    c_train->add_option("--init", tr.init, "starting policy (default: all-zero parameters)");
    c_train->add_option("--reference", tr.reference, "KL reference policy (default: the starting policy)");
    c_train->add_option("--pool-states", tr.pool_states, "states drawn into the pool");
    c_train->add_option("--pool-seed", tr.pool_seed, "seed of the pool draw");
    c_train->add_option("--weighting", tr.weighting, "uniform, by_task or by_trajectory");
    c_train->add_option("--updates", tr.updates, "total PPO updates");
    c_train->add_option("--seed", tr.ppo.seed, "trainer seed");
    c_train->add_option("--batch", tr.ppo.batch_size, "states (step-wise) or trajectories (episode-wise) per update");
    c_train->add_option("--clip", tr.ppo.clip_eps, "PPO clip epsilon");
    c_train->add_option("--actor-lr", tr.ppo.actor_lr, "actor step size");
    c_train->add_option("--critic-lr", tr.ppo.critic_lr, "critic step size");
    c_train->add_option("--kl-coef", tr.ppo.kl_coef, "KL penalty coefficient");
    c_train->add_flag("--no-kl", tr.no_kl, "disable the KL penalty");
    c_train->add_option("--epochs", tr.ppo.epochs, "actor epochs per batch");
    c_train->add_option("--critic-epochs", tr.ppo.critic_epochs, "critic epochs per batch");
    c_train->add_option("--advantage", tr.advantage, "reward_minus_value or reward");
    c_train->add_flag("--normalize-advantages", tr.ppo.normalize_advantages, "standardise advantages per batch");
    c_train->add_flag("--no-memo", tr.no_memo, "re-run every step-wise evaluation");
    c_train->add_flag("--no-clamp", tr.no_clamp, "do not clamp edit rewards");
    c_train->add_flag("--track-objective", tr.track_objective, "exact pool objective after each update");
    c_train->add_flag("--timing", tr.timing, "record wall time per update (curves stop being byte-stable)");
    c_train->add_option("--curve", tr.curve, "learning-curve file");
    c_train->add_option("--checkpoint", tr.checkpoint, "checkpoint file, written at the end");
    c_train->add_option("--checkpoint-every", tr.checkpoint_every, "also checkpoint every N updates");
    c_train->add_option("--resume", tr.resume, "continue from a checkpoint");
    c_train->add_option("--out", tr.out, "trained policy file");
    c_train->add_option("--scratch", tr.scratch, "workspace root");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "evaluate a policy: m_avg, delta_r, best@K");
    c_eval->add_option("--tasks", ev.tasks, "task directory")->required();
    c_eval->add_option("--task", ev.task_ids, "restrict to these task ids");
    add_policy(c_eval, ev.policy);
    add_transformer(c_eval, ev.transformer);
    c_eval->add_option("--k", ev.k, "trajectories per task");
    c_eval->add_option("--seed", ev.seed, "evaluation seed");
    c_eval->add_option("--workers", ev.workers, "parallel episodes");
    c_eval->add_option("--out", ev.out, "report file");
    c_eval->add_option("--trajectories", ev.trajectories, "also store the evaluation trajectories here");
    c_eval->add_option("--scratch", ev.scratch, "workspace root");
    c_eval->add_flag("--no-clamp", ev.no_clamp, "do not clamp edit rewards");

    std::string inject = "none";
    auto* c_verify = app.add_subcommand("verify", "run the oracle suites");
    c_verify->add_option("--inject", inject, "none, reward-denominator-sign or distribution-off-by-one");

    ReplayArgs rp;
    auto* c_replay = app.add_subcommand("replay", "re-execute stored trajectories and compare feedback");
    c_replay->add_option("--store", rp.store, "trajectory store")->required();
    c_replay->add_option("--tasks", rp.tasks, "task directory")->required();
    c_replay->add_option("--id", rp.ids, "only these record ids");
    c_replay->add_option("--scratch", rp.scratch, "workspace root");

    std::vector<std::string> rest(args.rbegin(), args.rend());
    if (!rest.empty())
        rest.pop_back(); // program name
    try
    {
        app.parse(rest);
    }
    catch (const CLI::CallForHelp&)
    {
        out << app.help();
        return kExitOk;
    }
    catch (const CLI::ParseError& e)
    {
        err << "agentml: " << e.what() << "\n";
        return kExitConfig;
    }

    try
    {
        if (*c_mk)
            return make_tasks(mk, out);
        if (*c_pool)
            return cmd_pool(po, out, err);
        if (*c_collect)
            return cmd_collect(co, out, err);
        if (*c_sft)
            return cmd_sft(sf, out);
        if (*c_train)
            return cmd_train(tr, out);
        if (*c_eval)
            return cmd_eval(ev, out);
        if (*c_verify)
            return cmd_verify(inject, out);
        if (*c_replay)
            return cmd_replay(rp, out);
    }
    catch (const Error& e)
    {
        err << "agentml: " << e.what() << "\n";
        auto const c = e.code();
        return c == ErrorCode::PolicyUnavailable || c == ErrorCode::GeneratorUnavailable ? kExitTransport : kExitConfig;
    }
    catch (const std::exception& e)
    {
        err << "agentml: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}

} // namespace agentml
