#include "dirguide/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dirguide/errors.hpp"
#include "dirguide/types.hpp"
#include "text_util.hpp"

namespace dirguide {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::uint64_t h, const std::string& s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::string base64_encode(const std::string& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size()) {
        const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                                static_cast<unsigned char>(bytes[i + 2]);
        out += alphabet[(n >> 18) & 63];
        out += alphabet[(n >> 12) & 63];
        out += alphabet[(n >> 6) & 63];
        out += alphabet[n & 63];
        i += 3;
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
        out += alphabet[(n >> 18) & 63];
        out += alphabet[(n >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += alphabet[(n >> 18) & 63];
        out += alphabet[(n >> 12) & 63];
        out += alphabet[(n >> 6) & 63];
        out += "=";
    }
    return out;
}

std::string file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TransportError("cannot read image for request: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string mime_for(const std::filesystem::path& path) {
    const auto ext = detail::to_lower_ascii(path.extension().string());
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".png") return "image/png";
    if (ext == ".ppm") return "image/x-portable-pixmap";
    return "application/octet-stream";
}

// Splits "http://host:port/some/path" into client base and request path.
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw InvalidArgument("endpoint_url must include a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string tag_without_round(const std::string& tag) {
    const auto pos = tag.rfind('#');
    return pos == std::string::npos ? tag : tag.substr(0, pos);
}

class ScriptedOracle : public Oracle {
public:
    explicit ScriptedOracle(ScriptedOracleSpec spec) : spec_(std::move(spec)) {}

    std::string answer(const OracleRequest& req) override {
        switch (spec_.mode) {
            case ScriptedOracleSpec::Mode::FixedLetter:
                return std::string(1, spec_.letter);
            case ScriptedOracleSpec::Mode::AnswerTable: {
                for (const std::string& key :
                     {req.tag, tag_without_round(req.tag), req.image_ref.stem().string()}) {
                    if (key.empty()) continue;
                    auto it = spec_.table.find(key);
                    if (it != spec_.table.end()) return it->second;
                }
                throw OracleRefusal("scripted table has no entry for tag \"" + req.tag + "\"");
            }
            case ScriptedOracleSpec::Mode::VisibleFraction: {
                const std::string stem = !req.tag.empty() ? tag_without_round(req.tag)
                                                          : req.image_ref.stem().string();
                std::string base;
                const double visible = visible_fraction_from_name(stem, &base);
                if (visible + 1e-12 < spec_.min_visible) return spec_.sentinel;
                auto it = spec_.table.find(base);
                return it != spec_.table.end() ? it->second : spec_.sentinel;
            }
        }
        throw OracleRefusal("scripted oracle: unknown mode");
    }

private:
    ScriptedOracleSpec spec_;
};

class HttpOracle : public Oracle {
public:
    explicit HttpOracle(OracleConfig cfg) : cfg_(std::move(cfg)) {
        if (!cfg_.valid()) throw InvalidArgument("http oracle needs endpoint_url and model_name");
        std::tie(base_, path_) = split_url(cfg_.endpoint_url);
    }

    std::string answer(const OracleRequest& req) override {
        const std::string body = build_body(req);
        httplib::Headers headers;
        if (!cfg_.api_key_env.empty()) {
            const char* key = std::getenv(cfg_.api_key_env.c_str());
            if (key == nullptr || *key == '\0')
                throw AuthMissing("environment variable " + cfg_.api_key_env + " is not set");
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        std::string last_error;
        const int attempts = cfg_.max_retries + 1;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) backoff_sleep(attempt);
            httplib::Client client(base_);
            const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
            client.set_connection_timeout(secs.count() > 0 ? secs.count() : 1, 0);
            client.set_read_timeout(secs.count() > 0 ? secs.count() : 1, 0);
            auto res = client.Post(path_, headers, body, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;  // rate limit or server-side trouble, retryable
            }
            if (res->status >= 400)
                throw TransportError("HTTP " + std::to_string(res->status) + " from " +
                                     cfg_.endpoint_url + " (not retryable)");
            return parse_content(res->body);
        }
        throw TransportError("oracle unreachable after " + std::to_string(attempts) +
                             " attempts: " + last_error);
    }

private:
    std::string build_body(const OracleRequest& req) const {
        nlohmann::json message;
        message["role"] = "user";
        if (req.image_ref.empty()) {
            message["content"] = req.prompt;
        } else {
            const std::string data_url = "data:" + mime_for(req.image_ref) + ";base64," +
                                         base64_encode(file_bytes(req.image_ref));
            message["content"] = nlohmann::json::array(
                {{{"type", "text"}, {"text", req.prompt}},
                 {{"type", "image_url"}, {"image_url", {{"url", data_url}}}}});
        }
        nlohmann::json body{{"model", cfg_.model_name},
                            {"temperature", req.temperature},
                            {"max_tokens", req.max_tokens},
                            {"messages", nlohmann::json::array({message})}};
        return body.dump();
    }

    static std::string parse_content(const std::string& body) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            throw TransportError(std::string("malformed oracle response: ") + e.what());
        }
        if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
            throw TransportError("oracle response has no choices");
        const auto& msg = doc["choices"][0];
        std::string content;
        if (msg.contains("message") && msg["message"].contains("content") &&
            msg["message"]["content"].is_string())
            content = msg["message"]["content"].get<std::string>();
        if (detail::trim(content).empty()) throw OracleRefusal("oracle returned an empty response");
        return content;
    }

    void backoff_sleep(int attempt) const {
        const std::uint64_t base_ms = 200;
        const std::uint64_t cap_ms = 5000;
        std::uint64_t delay = base_ms << std::min(attempt - 1, 12);
        delay = std::min(delay, cap_ms);
        // jitter in [0.5, 1.5); timing only, never output-affecting
        thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
        const double jitter = 0.5 + (jitter_rng() >> 11) * (1.0 / (1ULL << 53));
        delay = static_cast<std::uint64_t>(delay * jitter);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }

    OracleConfig cfg_;
    std::string base_;
    std::string path_;
};

}  // namespace

double visible_fraction_from_name(const std::string& stem, std::string* base_out) {
    // "{base}_{left|right|up|down}_{1..9}" per the perturbed-file contract
    if (base_out) *base_out = stem;
    const auto last = stem.rfind('_');
    if (last == std::string::npos || last + 2 != stem.size()) return 1.0;
    const char t = stem[last + 1];
    if (t < '1' || t > '9') return 1.0;
    const auto prev = stem.rfind('_', last - 1);
    if (prev == std::string::npos) return 1.0;
    const std::string dir = stem.substr(prev + 1, last - prev - 1);
    if (!parse_direction(dir)) return 1.0;
    if (base_out) *base_out = stem.substr(0, prev);
    return 1.0 - (t - '0') / 10.0;
}

std::string request_hash(const OracleRequest& req) {
    std::uint64_t h = kFnvOffset;
    h = fnv1a(h, req.tag);
    h = fnv1a(h, req.image_ref.string());
    h = fnv1a(h, req.prompt);
    h = fnv1a(h, std::to_string(req.max_tokens));
    h = fnv1a(h, std::to_string(req.temperature));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

TranscriptLog::TranscriptLog(const std::filesystem::path& path) : path_(path) {
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw WriteError("cannot open transcript log: " + path_.string());
}

void TranscriptLog::record(const OracleRequest& req, const std::string& response, bool ok,
                           const std::string& error, double latency_ms) {
    nlohmann::ordered_json rec{{"tag", req.tag},
                               {"hash", request_hash(req)},
                               {"image", req.image_ref.string()},
                               {"prompt", req.prompt},
                               {"response", response},
                               {"ok", ok},
                               {"error", error},
                               {"latency_ms", static_cast<std::int64_t>(latency_ms)}};
    std::lock_guard<std::mutex> lock(mu_);
    std::ofstream out(path_, std::ios::app);
    out << rec.dump() << "\n";
}

std::map<std::string, std::string> load_transcript_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MalformedManifest("cannot open transcript: " + path.string());
    std::map<std::string, std::string> table;
    std::string line;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        if (rec.value("ok", false)) table[rec.at("tag").get<std::string>()] = rec.at("response");
    }
    return table;
}

std::unique_ptr<Oracle> make_oracle(const OracleConfig& cfg) {
    if (cfg.kind == OracleConfig::Kind::Scripted)
        return std::make_unique<ScriptedOracle>(cfg.scripted);
    return std::make_unique<HttpOracle>(cfg);
}

std::string answer(const OracleRequest& req, const OracleConfig& cfg) {
    return make_oracle(cfg)->answer(req);
}

std::vector<BatchResult> answer_batch(Oracle& oracle, const std::vector<OracleRequest>& reqs,
                                      int max_concurrency, TranscriptLog* log) {
    std::vector<BatchResult> results(reqs.size());
    std::vector<double> latencies(reqs.size(), 0.0);
    if (reqs.empty()) return results;

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= reqs.size()) return;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                results[i] = {oracle.answer(reqs[i]), "", true};
            } catch (const TransportError& e) {
                results[i] = {"", std::string("transport: ") + e.what(), false};
            } catch (const AuthMissing& e) {
                results[i] = {"", std::string("auth: ") + e.what(), false};
            } catch (const OracleRefusal& e) {
                results[i] = {"", std::string("refusal: ") + e.what(), false};
            } catch (const std::exception& e) {
                results[i] = {"", std::string("error: ") + e.what(), false};
            }
            latencies[i] = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
        }
    };

    const int workers =
        std::max(1, std::min<int>(max_concurrency, static_cast<int>(reqs.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (log) {
        // logged after the join, in request order, so transcripts are stable
        for (std::size_t i = 0; i < reqs.size(); ++i)
            log->record(reqs[i], results[i].text, results[i].ok, results[i].error, latencies[i]);
    }
    return results;
}

std::vector<BatchResult> answer_batch(const std::vector<OracleRequest>& reqs,
                                      const OracleConfig& cfg, TranscriptLog* log) {
    auto oracle = make_oracle(cfg);
    return answer_batch(*oracle, reqs, cfg.max_concurrency, log);
}

}  // namespace dirguide
