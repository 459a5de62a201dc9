#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dirguide/errors.hpp"
#include "dirguide/oracle.hpp"
#include "test_support.hpp"

using namespace dirguide;
using testsup::TempDir;

namespace {

OracleRequest req_for(const std::string& tag, const std::string& prompt = "prompt") {
    OracleRequest r;
    r.tag = tag;
    r.prompt = prompt;
    return r;
}

/// Local chat-completions stub; handler decides status/content per request.
class StubServer {
public:
    using Handler = std::function<void(const nlohmann::json& body, int& status, std::string& content)>;

    explicit StubServer(Handler handler) : handler_(std::move(handler)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            ++hits_;
            int status = 200;
            std::string content = "ok";
            handler_(nlohmann::json::parse(req.body), status, content);
            res.status = status;
            if (status == 200) {
                nlohmann::json body{
                    {"choices",
                     nlohmann::json::array({{{"message", {{"role", "assistant"},
                                                          {"content", content}}}}})}};
                res.set_content(body.dump(), "application/json");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    }
    int hits() const { return hits_.load(); }

private:
    httplib::Server server_;
    Handler handler_;
    std::atomic<int> hits_{0};
    int port_ = 0;
    std::thread thread_;
};

OracleConfig http_config(const std::string& url, int max_retries = 0) {
    OracleConfig cfg;
    cfg.kind = OracleConfig::Kind::Http;
    cfg.endpoint_url = url;
    cfg.model_name = "stub-model";
    cfg.api_key_env = "";  // local stub, no credential
    cfg.max_retries = max_retries;
    cfg.timeout = std::chrono::milliseconds(3000);
    return cfg;
}

}  // namespace

TEST_CASE("scripted answer table looks up by tag, round-stripped tag, then stem") {
    OracleConfig cfg;
    cfg.scripted.mode = ScriptedOracleSpec::Mode::AnswerTable;
    cfg.scripted.table = {{"q1", "laptop"}, {"q2#2", "left"}};
    auto oracle = make_oracle(cfg);

    CHECK(oracle->answer(req_for("q1")) == "laptop");
    CHECK(oracle->answer(req_for("q1#2")) == "laptop");  // falls back across rounds
    CHECK(oracle->answer(req_for("q2#2")) == "left");
    CHECK_THROWS_AS(oracle->answer(req_for("q3")), OracleRefusal);

    OracleRequest by_image;
    by_image.image_ref = "somewhere/q1.jpg";
    CHECK(oracle->answer(by_image) == "laptop");
}

TEST_CASE("scripted fixed letter always answers the same") {
    OracleConfig cfg;
    cfg.scripted.mode = ScriptedOracleSpec::Mode::FixedLetter;
    cfg.scripted.letter = 'A';
    auto oracle = make_oracle(cfg);
    CHECK(oracle->answer(req_for("x")) == "A");
    CHECK(oracle->answer(req_for("y")) == "A");
}

TEST_CASE("visible fraction rule reads the perturbed naming contract") {
    std::string base;
    CHECK(visible_fraction_from_name("q1_left_5", &base) == doctest::Approx(0.5));
    CHECK(base == "q1");
    CHECK(visible_fraction_from_name("q1_up_9", &base) == doctest::Approx(0.1));
    CHECK(visible_fraction_from_name("q1", &base) == doctest::Approx(1.0));
    CHECK(base == "q1");
    CHECK(visible_fraction_from_name("weird_name", &base) == doctest::Approx(1.0));
    CHECK(visible_fraction_from_name("a_left_12", &base) == doctest::Approx(1.0));

    OracleConfig cfg;
    cfg.scripted.mode = ScriptedOracleSpec::Mode::VisibleFraction;
    cfg.scripted.min_visible = 0.5;
    cfg.scripted.table = {{"q1", "laptop"}};
    auto oracle = make_oracle(cfg);
    // crop leaving 0.3 of the bbox: below the rule, sentinel wrong answer
    CHECK(oracle->answer(req_for("q1_left_7")) == "UNKNOWN");
    // at the boundary the answer is still correct
    CHECK(oracle->answer(req_for("q1_left_5")) == "laptop");
    CHECK(oracle->answer(req_for("q1")) == "laptop");
    // unknown base id cannot be answered correctly
    CHECK(oracle->answer(req_for("zz_left_1")) == "UNKNOWN");
}

TEST_CASE("answer_batch keeps results positionally aligned") {
    OracleConfig cfg;
    cfg.scripted.mode = ScriptedOracleSpec::Mode::AnswerTable;
    cfg.scripted.table = {{"a", "1"}, {"b", "2"}, {"c", "3"}};
    auto oracle = make_oracle(cfg);

    SUBCASE("all succeed in input order") {
        const auto results =
            answer_batch(*oracle, {req_for("a"), req_for("b"), req_for("c")}, 2);
        REQUIRE(results.size() == 3);
        CHECK(results[0].text == "1");
        CHECK(results[1].text == "2");
        CHECK(results[2].text == "3");
    }
    SUBCASE("a failing request is isolated at its index") {
        const auto results =
            answer_batch(*oracle, {req_for("a"), req_for("nope"), req_for("c")}, 2);
        REQUIRE(results.size() == 3);
        CHECK(results[0].ok);
        CHECK_FALSE(results[1].ok);
        CHECK(results[1].error.find("refusal:") == 0);
        CHECK(results[2].ok);
    }
    SUBCASE("empty batch yields an empty list") {
        CHECK(answer_batch(*oracle, {}, 4).empty());
    }
}

namespace {

/// Oracle that observes its own concurrency.
class SlowCountingOracle : public Oracle {
public:
    std::string answer(const OracleRequest& req) override {
        const int now = ++in_flight_;
        int seen = max_seen_.load();
        while (now > seen && !max_seen_.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        --in_flight_;
        return req.tag;
    }
    int max_seen() const { return max_seen_.load(); }

private:
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_seen_{0};
};

}  // namespace

TEST_CASE("answer_batch honors the concurrency bound") {
    SlowCountingOracle oracle;
    std::vector<OracleRequest> reqs;
    for (int i = 0; i < 24; ++i) reqs.push_back(req_for("t" + std::to_string(i)));
    const auto results = answer_batch(oracle, reqs, 3);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
        REQUIRE(results[i].ok);
        CHECK(results[i].text == reqs[i].tag);
    }
    CHECK(oracle.max_seen() <= 3);
    CHECK(oracle.max_seen() >= 2);  // it did actually run in parallel
}

TEST_CASE("transcripts are ordered, replayable, and deterministic for scripted runs") {
    TempDir tmp;
    OracleConfig cfg;
    cfg.scripted.mode = ScriptedOracleSpec::Mode::AnswerTable;
    cfg.scripted.table = {{"a", "alpha"}, {"b", "beta"}, {"c", "gamma"}};
    auto oracle = make_oracle(cfg);
    const std::vector<OracleRequest> reqs = {req_for("a", "p1"), req_for("b", "p2"),
                                             req_for("c", "p3")};

    TranscriptLog log1(tmp / "t1.jsonl");
    answer_batch(*oracle, reqs, 3, &log1);
    TranscriptLog log2(tmp / "t2.jsonl");
    answer_batch(*oracle, reqs, 3, &log2);

    const auto rec1 = testsup::read_jsonl(tmp / "t1.jsonl");
    const auto rec2 = testsup::read_jsonl(tmp / "t2.jsonl");
    REQUIRE(rec1.size() == 3);
    REQUIRE(rec2.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rec1[i].at("tag") == reqs[i].tag);  // input order, not completion order
        for (const char* key : {"tag", "hash", "prompt", "response", "ok", "error"}) {
            CHECK(rec1[i].at(key) == rec2[i].at(key));
        }
    }

    const auto table = load_transcript_table(tmp / "t1.jsonl");
    CHECK(table == std::map<std::string, std::string>{
                       {"a", "alpha"}, {"b", "beta"}, {"c", "gamma"}});
}

TEST_CASE("http oracle posts the chat-completions shape and parses the reply") {
    TempDir tmp;
    const auto img = tmp / "q1.ppm";
    testsup::write_gray_image(img, 8, 8);

    nlohmann::json seen_body;
    std::mutex mu;
    StubServer server([&](const nlohmann::json& body, int& status, std::string& content) {
        std::lock_guard<std::mutex> lock(mu);
        seen_body = body;
        status = 200;
        content = "a laptop";
    });

    OracleRequest req = req_for("q1", "What is this?");
    req.image_ref = img;
    const auto cfg = http_config(server.url());
    CHECK(answer(req, cfg) == "a laptop");

    CHECK(seen_body.at("model") == "stub-model");
    CHECK(seen_body.at("temperature") == 0.0);
    const auto& content = seen_body.at("messages").at(0).at("content");
    REQUIRE(content.is_array());
    CHECK(content.at(0).at("text") == "What is this?");
    const std::string url = content.at(1).at("image_url").at("url");
    CHECK(url.rfind("data:image/x-portable-pixmap;base64,", 0) == 0);
}

TEST_CASE("http oracle retries transient failures and stops at max_retries") {
    SUBCASE("permanent 500 exhausts all attempts") {
        StubServer server([](const nlohmann::json&, int& status, std::string&) { status = 500; });
        auto oracle = make_oracle(http_config(server.url(), 2));
        CHECK_THROWS_AS(oracle->answer(req_for("x")), TransportError);
        CHECK(server.hits() == 3);  // 1 + 2 retries
    }
    SUBCASE("429 then success") {
        std::atomic<int> n{0};
        StubServer server([&](const nlohmann::json&, int& status, std::string& content) {
            status = ++n <= 2 ? 429 : 200;
            content = "recovered";
        });
        auto oracle = make_oracle(http_config(server.url(), 3));
        CHECK(oracle->answer(req_for("x")) == "recovered");
        CHECK(server.hits() == 3);
    }
    SUBCASE("plain 4xx does not retry") {
        StubServer server([](const nlohmann::json&, int& status, std::string&) { status = 400; });
        auto oracle = make_oracle(http_config(server.url(), 5));
        CHECK_THROWS_AS(oracle->answer(req_for("x")), TransportError);
        CHECK(server.hits() == 1);
    }
    SUBCASE("unreachable endpoint fails after retries") {
        // nothing listens on this port
        auto oracle = make_oracle(http_config("http://127.0.0.1:1/v1/chat/completions", 1));
        CHECK_THROWS_AS(oracle->answer(req_for("x")), TransportError);
    }
}

TEST_CASE("http oracle demands its credential env var when configured") {
    StubServer server([](const nlohmann::json&, int& status, std::string&) { status = 200; });
    auto cfg = http_config(server.url());
    cfg.api_key_env = "DIRGUIDE_TEST_KEY_THAT_IS_UNSET";
    ::unsetenv("DIRGUIDE_TEST_KEY_THAT_IS_UNSET");
    auto oracle = make_oracle(cfg);
    CHECK_THROWS_AS(oracle->answer(req_for("x")), AuthMissing);
    CHECK(server.hits() == 0);
}

TEST_CASE("empty oracle responses surface as refusals") {
    StubServer server(
        [](const nlohmann::json&, int& status, std::string& content) { status = 200; content = "  "; });
    auto oracle = make_oracle(http_config(server.url()));
    CHECK_THROWS_AS(oracle->answer(req_for("x")), OracleRefusal);
}
