// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <agentml/episode.hpp>
#include <agentml/policies.hpp>
#include <agentml/pool.hpp>
#include <agentml/remote.hpp>
#include <agentml/transform.hpp>

#include <doctest.h>
#include <httplib.h>

#include <cstdlib>
#include <mutex>
#include <thread>

using namespace agentml;
using agentml::test::TempDir;

namespace
{
// Chat-completion and embedding endpoints on a loopback port.
class FakeServer
{
  public:
    FakeServer()
    {
        _server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(_mutex);
            requests.push_back(Json::parse(req.body));
            auth = req.get_header_value("Authorization");
            if (fail)
            {
                res.status = 500;
                res.set_content("overloaded", "text/plain");
                return;
            }
            Json reply { { "choices", Json::array({ { { "message", { { "role", "assistant" }, { "content", next_reply } } } } }) } };
            res.set_content(reply.dump(), "application/json");
        });
        _server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
            auto const body = Json::parse(req.body);
            Json data = Json::array();
            auto const& input = body.at("input");
            // Reverse order with explicit indices, as some servers do.
            for (std::size_t i = input.size(); i-- > 0;)
                data.push_back({ { "index", i }, { "embedding", { static_cast<double>(input[i].get<std::string>().size()), 1.0 } } });
            res.set_content(Json { { "data", data } }.dump(), "application/json");
        });
        _port = _server.bind_to_any_port("127.0.0.1");
        _thread = std::thread([this] { _server.listen_after_bind(); });
        _server.wait_until_ready();
    }
    ~FakeServer()
    {
        _server.stop();
        _thread.join();
    }

    [[nodiscard]] EndpointConfig endpoint() const
    {
        EndpointConfig c;
        c.url = "http://127.0.0.1:" + std::to_string(_port) + "/v1";
        c.model = "fake-model";
        c.timeout = Seconds(5);
        return c;
    }

    std::vector<Json> requests;
    std::string auth;
    std::string next_reply;
    bool fail = false;

  private:
    httplib::Server _server;
    std::thread _thread;
    std::mutex _mutex;
    int _port = 0;
};
} // namespace

TEST_CASE("chat client sends the message list and reads the completion")
{
    FakeServer server;
    server.next_reply = "hello";
    ::setenv("AGENTML_TEST_KEY", "sekrit", 1);
    auto ep = server.endpoint();
    ep.api_key_env = "AGENTML_TEST_KEY";
    ChatClient client(ep);
    CHECK(client.complete({ { "system", "s" }, { "user", "u" } }) == "hello");
    REQUIRE(server.requests.size() == 1);
    auto const& body = server.requests.front();
    CHECK(body.at("model") == "fake-model");
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("messages")[1].at("content") == "u");
    CHECK(server.auth == "Bearer sekrit");
    CHECK(ep.to_json().dump().find("sekrit") == std::string::npos);
    ::unsetenv("AGENTML_TEST_KEY");
}

TEST_CASE("server errors surface as the caller's failure code")
{
    FakeServer server;
    server.fail = true;
    try
    {
        ChatClient(server.endpoint()).complete({ { "user", "u" } });
        FAIL("expected an error");
    }
    catch (const Error& e)
    {
        CHECK(e.code() == ErrorCode::PolicyUnavailable);
    }
    try
    {
        ChatClient(server.endpoint(), ErrorCode::GeneratorUnavailable).complete({ { "user", "u" } });
        FAIL("expected an error");
    }
    catch (const Error& e)
    {
        CHECK(e.code() == ErrorCode::GeneratorUnavailable);
    }
}

TEST_CASE("a remote policy drives an episode")
{
    FakeServer server;
    TempDir dir("remote-ep");
    auto const task = test::scripted_task(dir / "tasks", "remote-task", 1, 0.5, 0.7, { { "augment", 0.05 } });
    server.next_reply = "Reflection: none\nResearch Plan and Status: submit\nFact Check: none\nThought: done\n"
                        "Action: Final Answer\nAction Input: {\"final_answer\": \"train.py\"}\nObservation: ignored";
    RemoteBackend backend(server.endpoint());
    StubTransformer stub;
    EpisodeOptions o;
    o.scratch_root = dir / "scratch";
    auto const t = run_episode(task, backend, stub, 1, o);
    REQUIRE(t.steps.size() == 1);
    CHECK(t.termination == Termination::FinalAnswer);
    CHECK(t.final_metric == 0.5);
    auto const& messages = server.requests.front().at("messages");
    CHECK(messages[0].at("role") == "system");
    CHECK(messages[0].at("content").get<std::string>().find("Research Problem:") != std::string::npos);
}

TEST_CASE("remote embedder and idea generator")
{
    FakeServer server;
    RemoteEmbedder embedder(server.endpoint());
    auto const e = embedder.embed({ "a", "bbb" });
    REQUIRE(e.size() == 2);
    CHECK(e[0] == std::vector<double> { 1.0, 1.0 });
    CHECK(e[1] == std::vector<double> { 3.0, 1.0 });

    server.next_reply = "[advice]\nUse mixup\nAdd label smoothing\n";
    RemoteGenerator gen(server.endpoint(), "Classify images.", "print('hi')");
    CHECK(gen.generate(IdeaAxis::Data, 2) == std::vector<std::string> { "Use mixup", "Add label smoothing" });
    auto const prompt = server.requests.back().at("messages")[0].at("content").get<std::string>();
    CHECK(prompt.find("Classify images.") != std::string::npos);
    CHECK(prompt.find("You should give 2 advice") != std::string::npos);

    server.next_reply = "I have no advice.";
    CHECK_THROWS_AS(gen.generate(IdeaAxis::Data, 2), Error);
}
