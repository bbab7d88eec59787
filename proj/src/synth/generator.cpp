#include "hstf/synth/generator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>

#include "hstf/common/error.hpp"
#include "hstf/common/rng.hpp"
#include "hstf/ingest/http_message.hpp"

namespace hstf::synth {

namespace {

constexpr int64_t kBaseTimeUs = 1'600'000'000LL * 1'000'000LL;
constexpr int64_t kFlowSpacingUs = 500'000;
constexpr int64_t kBeaconPeriodUs = 30'000'000;

constexpr std::string_view kTokenChars =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
constexpr std::string_view kWords[] = {
    "index", "news",  "static", "img",    "css",   "js",     "api",   "v1",     "user",
    "login", "about", "search", "assets", "media", "blog",   "post",  "cart",   "shop",
    "home",  "docs",  "help",   "main",   "app",   "images", "fonts", "report", "video"};
constexpr std::string_view kExtensions[] = {"", "", ".html", ".js", ".css", ".png", ".jpg", ".php", ".json"};
constexpr std::string_view kLorem[] = {"lorem", "ipsum", "dolor", "sit", "amet", "consectetur",
                                       "adipiscing", "elit", "sed", "do", "eiusmod", "tempor",
                                       "incididunt", "ut", "labore", "et", "magna", "aliqua"};

template <typename T, size_t N>
const T& pick(Rng& rng, const T (&items)[N]) {
  return items[static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(N) - 1))];
}

int draw(Rng& rng, IntRange r) { return static_cast<int>(uniform_int(rng, r.min, r.max)); }

std::string hex16(uint64_t v) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = kHex[v & 0xF];
    v >>= 4;
  }
  return s;
}

/// mix_seed is a bijection, so distinct inputs give distinct tokens.
std::string host_token(uint64_t seed, uint64_t slot) {
  return hex16(mix_seed(slot ^ mix_seed(seed ^ 0x686F7374ULL)));
}

std::string http_date(int64_t ts_us) {
  const std::time_t t = static_cast<std::time_t>(ts_us / 1'000'000);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "%a, %d %b %Y %H:%M:%S GMT", &tm);
  return buf;
}

std::string token_chars(Rng& rng, size_t n) {
  std::string s;
  s.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    s.push_back(kTokenChars[static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(kTokenChars.size()) - 1))]);
  }
  return s;
}

std::string text_body(Rng& rng, size_t n, bool html) {
  std::string s = html ? "<html><body><p>" : "";
  while (s.size() < n) {
    s += pick(rng, kLorem);
    s.push_back(uniform01(rng) < 0.1 ? '\n' : ' ');
  }
  s.resize(n);
  return s;
}

std::string binary_body(Rng& rng, size_t n) {
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(uniform_int(rng, 0, 255));
  return s;
}

std::string pick_method(Rng& rng, const GenProfile& p) {
  std::vector<double> w;
  w.reserve(p.method_weights.size());
  for (const auto& [m, weight] : p.method_weights) w.push_back(weight);
  return p.method_weights[weighted_pick(rng, w)].first;
}

struct Header {
  std::string name;
  std::string value;
};

ingest::HttpMessage assemble(const std::string& start, const std::vector<Header>& headers,
                             const std::string& body, int64_t ts) {
  std::string raw = start + "\r\n";
  for (const auto& h : headers) raw += h.name + ": " + h.value + "\r\n";
  raw += "\r\n";
  raw += body;
  auto msg = ingest::parse_http_message(raw, ts);
  if (!msg) throw Error(ErrorCode::kData, "generator produced an undecodable message");
  return *std::move(msg);
}

// --- trojan-like exchanges ----------------------------------------------------

constexpr std::string_view kTrojanPrefixes[] = {"/index.php?id=", "/gate.php?q=", "/api/check?token=",
                                                "/update/", "/news.asp?s=", "/images/"};
constexpr std::string_view kOldAgents[] = {
    "Mozilla/4.0 (compatible; MSIE 7.0; Windows NT 6.1)",
    "Mozilla/4.0 (compatible; MSIE 8.0; Windows NT 5.1; Trident/4.0)",
    "Mozilla/5.0 (Windows NT 6.1; rv:24.0) Gecko/20100101"};

struct TrojanFlowState {
  std::string prefix;
  std::string agent;
  int base_payload = 0;
  int header_count = 0;
};

std::pair<ingest::HttpMessage, ingest::HttpMessage> trojan_exchange(Rng& rng, const GenProfile& p,
                                                                    const TrojanFlowState& st,
                                                                    const std::string& server,
                                                                    int64_t ts, int64_t reply_ts) {
  const std::string method = pick_method(rng, p);
  const int url_len = draw(rng, p.url_len);
  std::string target = st.prefix;
  if (static_cast<int>(target.size()) < url_len) target += token_chars(rng, static_cast<size_t>(url_len) - target.size());

  const double jitter = (1.0 - p.beacon_regularity) * uniform(rng, -0.5, 0.5);
  const int payload = std::clamp(static_cast<int>(std::lround(st.base_payload * (1.0 + jitter))),
                                 p.payload_len.min, p.payload_len.max);
  std::string body;
  if (method == "POST" || method == "PUT") body = token_chars(rng, static_cast<size_t>(payload));

  std::vector<Header> all = {{"Host", server},
                             {"User-Agent", st.agent},
                             {"Accept", "*/*"},
                             {"Connection", "Keep-Alive"},
                             {"Cache-Control", "no-cache"},
                             {"Pragma", "no-cache"}};
  all.resize(std::min<size_t>(all.size(), static_cast<size_t>(std::max(1, st.header_count))));
  if (!body.empty()) {
    all.push_back({"Content-Type", "application/octet-stream"});
    all.push_back({"Content-Length", std::to_string(body.size())});
  }
  auto req = assemble(method + " " + target + " HTTP/1.1", all, body, ts);

  const bool ok = uniform01(rng) < 0.95;
  std::string reply_body = ok ? token_chars(rng, static_cast<size_t>(draw(rng, p.payload_len))) : "";
  std::vector<Header> rh = {{"Server", "nginx"},
                            {"Date", http_date(reply_ts)},
                            {"Content-Type", "text/html"},
                            {"Content-Length", std::to_string(reply_body.size())},
                            {"Connection", "keep-alive"}};
  auto res = assemble(ok ? "HTTP/1.1 200 OK" : "HTTP/1.1 404 Not Found", rh, reply_body, reply_ts);
  return {std::move(req), std::move(res)};
}

// --- benign-like exchanges ----------------------------------------------------

constexpr std::string_view kAgents[] = {
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/96.0.4664.110 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/15.1 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64; rv:95.0) Gecko/20100101 Firefox/95.0",
    "curl/7.68.0",
    "Dalvik/2.1.0 (Linux; U; Android 11; Pixel 5 Build/RQ3A.211001.001)",
    "Microsoft-CryptoAPI/10.0"};
constexpr std::string_view kServers[] = {"Apache/2.4.41 (Ubuntu)", "nginx/1.18.0", "Microsoft-IIS/10.0",
                                         "cloudflare", "gws", "openresty"};
constexpr std::string_view kLanguages[] = {"en-US,en;q=0.9", "zh-CN,zh;q=0.9", "de-DE,de;q=0.8,en;q=0.5", "fr"};

std::string benign_target(Rng& rng, const GenProfile& p) {
  int len = draw(rng, p.url_len);
  if (uniform01(rng) < 0.05) len = static_cast<int>(uniform_int(rng, 40, 120));
  std::string t = "/";
  while (static_cast<int>(t.size()) < len) {
    if (t.size() > 1) t += uniform01(rng) < 0.8 ? "/" : "?v=";
    t += pick(rng, kWords);
    if (uniform01(rng) < 0.3) t += pick(rng, kExtensions);
  }
  t.resize(static_cast<size_t>(std::max(1, len)));
  if (t.back() == '?' || t.back() == '=') t.back() = 'x';
  return t;
}

std::vector<Header> request_header_pool(Rng& rng, const std::string& server) {
  return {{"User-Agent", std::string(pick(rng, kAgents))},
          {"Accept", uniform01(rng) < 0.5 ? "text/html,application/xhtml+xml,application/xml;q=0.9,*/*;q=0.8" : "*/*"},
          {"Accept-Language", std::string(pick(rng, kLanguages))},
          {"Accept-Encoding", "gzip, deflate"},
          {"Referer", "http://" + server + "/" + std::string(pick(rng, kWords))},
          {"Cookie", "sid=" + token_chars(rng, static_cast<size_t>(uniform_int(rng, 8, 40)))},
          {"Connection", uniform01(rng) < 0.7 ? "keep-alive" : "close"},
          {"Cache-Control", "max-age=0"},
          {"Upgrade-Insecure-Requests", "1"},
          {"If-Modified-Since", "Tue, 01 Sep 2020 10:00:00 GMT"},
          {"DNT", "1"},
          {"Origin", "http://" + server},
          {"Pragma", "no-cache"},
          {"Sec-Fetch-Mode", "navigate"},
          {"X-Requested-With", "XMLHttpRequest"}};
}

struct Status {
  int code;
  std::string_view text;
  double weight;
};
constexpr Status kStatuses[] = {{200, "OK", 0.68},           {304, "Not Modified", 0.08},
                                {301, "Moved Permanently", 0.03}, {302, "Found", 0.05},
                                {404, "Not Found", 0.06},    {204, "No Content", 0.03},
                                {206, "Partial Content", 0.02}, {403, "Forbidden", 0.02},
                                {500, "Internal Server Error", 0.02}, {503, "Service Unavailable", 0.01}};
constexpr std::string_view kContentTypes[] = {"text/html; charset=utf-8", "application/json", "image/png",
                                              "text/css", "application/javascript", "image/jpeg"};

std::pair<ingest::HttpMessage, ingest::HttpMessage> benign_exchange(Rng& rng, const GenProfile& p,
                                                                    const std::string& server,
                                                                    int64_t ts, int64_t reply_ts) {
  const std::string method = pick_method(rng, p);
  const std::string target = benign_target(rng, p);
  std::string body;
  if (method == "POST" || method == "PUT") {
    const auto n = static_cast<size_t>(std::min(draw(rng, p.payload_len), 2000));
    body = uniform01(rng) < 0.5 ? text_body(rng, n, false) : "{\"q\":\"" + text_body(rng, n, false) + "\"}";
  }
  auto pool = request_header_pool(rng, server);
  shuffle(pool, rng);
  const int count = draw(rng, p.header_count);
  std::vector<Header> headers = {{"Host", server}};
  for (int i = 0; i + 1 < count && i < static_cast<int>(pool.size()); ++i) headers.push_back(pool[static_cast<size_t>(i)]);
  if (!body.empty()) {
    headers.push_back({"Content-Type", "application/x-www-form-urlencoded"});
    headers.push_back({"Content-Length", std::to_string(body.size())});
  }
  const std::string version = uniform01(rng) < 0.9 ? "HTTP/1.1" : "HTTP/1.0";
  auto req = assemble(method + " " + target + " " + version, headers, body, ts);

  std::vector<double> weights;
  for (const auto& s : kStatuses) weights.push_back(s.weight);
  const Status& st = kStatuses[weighted_pick(rng, weights)];
  const bool no_body = method == "HEAD" || st.code == 204 || st.code == 304;
  const std::string_view ctype = pick(rng, kContentTypes);
  std::string reply;
  if (!no_body) {
    const auto n = static_cast<size_t>(draw(rng, p.payload_len));
    reply = ctype.starts_with("image/") ? binary_body(rng, n) : text_body(rng, n, ctype.starts_with("text/html"));
  }
  std::vector<Header> rh = {{"Date", http_date(reply_ts)}, {"Server", std::string(pick(rng, kServers))}};
  std::vector<Header> extra = {{"Cache-Control", uniform01(rng) < 0.5 ? "no-store" : "public, max-age=3600"},
                               {"ETag", "\"" + token_chars(rng, 12) + "\""},
                               {"Last-Modified", "Mon, 31 Aug 2020 08:00:00 GMT"},
                               {"Set-Cookie", "id=" + token_chars(rng, 16) + "; Path=/; HttpOnly"},
                               {"Vary", "Accept-Encoding"},
                               {"Accept-Ranges", "bytes"},
                               {"X-Frame-Options", "SAMEORIGIN"},
                               {"Connection", "keep-alive"}};
  shuffle(extra, rng);
  extra.resize(static_cast<size_t>(uniform_int(rng, 1, static_cast<int64_t>(extra.size()))));
  rh.insert(rh.end(), extra.begin(), extra.end());
  if (st.code == 301 || st.code == 302) rh.push_back({"Location", "http://" + server + "/"});
  if (!no_body || method == "HEAD") {
    rh.push_back({"Content-Type", std::string(ctype)});
    rh.push_back({"Content-Length", std::to_string(reply.size())});
  }
  auto res = assemble(version + " " + std::to_string(st.code) + " " + std::string(st.text), rh, reply, reply_ts);
  return {std::move(req), std::move(res)};
}

IntRange parse_range(std::string_view v) {
  IntRange r;
  const auto dash = v.find('-', 1);
  auto num = [](std::string_view s) {
    int out = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(ErrorCode::kConfig, "bad number in profile: " + std::string(s));
    return out;
  };
  if (dash == std::string_view::npos) {
    r.min = r.max = num(v);
  } else {
    r.min = num(v.substr(0, dash));
    r.max = num(v.substr(dash + 1));
  }
  return r;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(Separability s) {
  switch (s) {
    case Separability::kHigh: return "high";
    case Separability::kMedium: return "medium";
    case Separability::kLow: return "low";
  }
  return "high";
}

Separability separability_from_string(std::string_view text) {
  if (text == "high") return Separability::kHigh;
  if (text == "medium") return Separability::kMedium;
  if (text == "low") return Separability::kLow;
  throw Error(ErrorCode::kConfig, "separability must be high, medium or low, got '" + std::string(text) + "'");
}

double mimic_fraction(Separability s) {
  switch (s) {
    case Separability::kHigh: return 0.0;
    case Separability::kMedium: return 0.15;
    case Separability::kLow: return 0.40;
  }
  return 0.0;
}

void GenProfile::validate() const {
  for (const IntRange* r : {&url_len, &header_count, &payload_len, &msgs_per_flow}) {
    if (r->min < 0 || r->max < r->min) throw Error(ErrorCode::kConfig, "profile range is empty or negative");
  }
  if (url_len.min < 1) throw Error(ErrorCode::kConfig, "url_len must be at least 1");
  if (msgs_per_flow.min < 1) throw Error(ErrorCode::kConfig, "msgs_per_flow must be at least 1");
  if (method_weights.empty()) throw Error(ErrorCode::kConfig, "profile needs at least one method");
  double total = 0.0;
  for (const auto& [m, w] : method_weights) {
    if (!ingest::is_request_line(m + " / HTTP/1.1") || w < 0.0) throw Error(ErrorCode::kConfig, "bad method weight for '" + m + "'");
    total += w;
  }
  if (total <= 0.0) throw Error(ErrorCode::kConfig, "method weights sum to zero");
  if (!(beacon_regularity >= 0.0 && beacon_regularity <= 1.0)) throw Error(ErrorCode::kConfig, "beacon_regularity must be in [0, 1]");
}

GenProfile default_profile(FlowClass cls, Separability sep, uint64_t seed) {
  GenProfile p;
  p.cls = cls;
  p.separability = sep;
  p.seed = seed;
  if (cls == FlowClass::kTrojan) {
    p.url_len = {70, 90};
    p.header_count = {3, 5};
    p.method_weights = {{"GET", 0.6}, {"POST", 0.4}};
    p.payload_len = {16, 128};
    p.msgs_per_flow = {4, 8};
    p.beacon_regularity = 0.9;
  } else {
    p.url_len = {1, 40};
    p.header_count = {6, 14};
    p.method_weights = {{"GET", 0.72}, {"POST", 0.12}, {"HEAD", 0.06}, {"OPTIONS", 0.03}, {"PUT", 0.04}, {"DELETE", 0.03}};
    p.payload_len = {0, 4000};
    p.msgs_per_flow = {1, 10};
    p.beacon_regularity = 0.0;
  }
  return p;
}

GenProfile parse_profile(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> kv;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::kConfig, "profile line lacks '=': " + std::string(line));
    kv.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  FlowClass cls = FlowClass::kBenign;
  for (const auto& [k, v] : kv) {
    if (k == "class") {
      if (v == "trojan" || v == "malicious") cls = FlowClass::kTrojan;
      else if (v == "benign") cls = FlowClass::kBenign;
      else throw Error(ErrorCode::kConfig, "profile class must be benign or trojan");
    }
  }
  GenProfile p = default_profile(cls);
  for (const auto& [k, v] : kv) {
    if (k == "class") continue;
    if (k == "separability") p.separability = separability_from_string(v);
    else if (k == "seed") p.seed = std::stoull(v);
    else if (k == "url_len") p.url_len = parse_range(v);
    else if (k == "header_count") p.header_count = parse_range(v);
    else if (k == "payload_len") p.payload_len = parse_range(v);
    else if (k == "msgs_per_flow") p.msgs_per_flow = parse_range(v);
    else if (k == "beacon_regularity") p.beacon_regularity = std::stod(v);
    else if (k == "methods") {
      p.method_weights.clear();
      std::string_view rest = v;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        std::string_view item = trim(rest.substr(0, comma));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        const auto colon = item.find(':');
        const std::string name(trim(item.substr(0, colon)));
        const double w = colon == std::string_view::npos ? 1.0 : std::stod(std::string(item.substr(colon + 1)));
        p.method_weights.emplace_back(name, w);
      }
    } else {
      throw Error(ErrorCode::kConfig, "unknown profile key '" + k + "'");
    }
  }
  p.validate();
  return p;
}

Flow generate_flow(const GenProfile& profile, uint64_t index, uint64_t host_index) {
  const bool trojan = profile.cls == FlowClass::kTrojan;
  Rng rng(derive_seed(profile.seed, trojan ? 0x74726F6AULL : 0x62656E69ULL, index));

  // At lower separability a share of trojan flows borrows benign parameters.
  const bool mimic = trojan && uniform01(rng) < mimic_fraction(profile.separability);
  const GenProfile benign = default_profile(FlowClass::kBenign, profile.separability, profile.seed);
  const GenProfile& p = mimic ? benign : profile;
  const bool beacon = trojan && !mimic;

  Flow flow;
  flow.id = index;
  flow.label = trojan ? Label::kMalicious : Label::kBenign;
  flow.key.client = {host_token(profile.seed, 2 * host_index), static_cast<uint16_t>(uniform_int(rng, 49152, 65535))};
  flow.key.server = {host_token(profile.seed, 2 * host_index + 1), static_cast<uint16_t>(uniform01(rng) < 0.9 ? 80 : 8080)};

  TrojanFlowState st;
  st.prefix = std::string(pick(rng, kTrojanPrefixes));
  st.agent = std::string(pick(rng, kOldAgents));
  st.base_payload = draw(rng, p.payload_len);
  st.header_count = draw(rng, p.header_count);

  const int exchanges = draw(rng, p.msgs_per_flow);
  int64_t ts = kBaseTimeUs + static_cast<int64_t>(index) * kFlowSpacingUs + uniform_int(rng, 0, kFlowSpacingUs - 1);
  for (int e = 0; e < exchanges; ++e) {
    const int64_t reply_ts = ts + uniform_int(rng, 5'000, 300'000);
    auto [req, res] = beacon ? trojan_exchange(rng, p, st, flow.key.server.host, ts, reply_ts)
                             : benign_exchange(rng, p, flow.key.server.host, ts, reply_ts);
    flow.messages.push_back(std::move(req));
    flow.messages.push_back(std::move(res));
    if (beacon) {
      const double jitter = (1.0 - p.beacon_regularity) * uniform(rng, -0.5, 0.5);
      ts += static_cast<int64_t>(static_cast<double>(kBeaconPeriodUs) * (1.0 + jitter));
    } else {
      ts = reply_ts + uniform_int(rng, 50'000, 20'000'000);
    }
  }
  flow.first_ts = flow.messages.front().timestamp_us;
  flow.last_ts = flow.messages.back().timestamp_us;
  return flow;
}

std::vector<Flow> generate(const GenProfile& profile, size_t count) {
  profile.validate();
  std::vector<Flow> out;
  out.reserve(count);
  const uint64_t cls_bit = profile.cls == FlowClass::kTrojan ? 1 : 0;
  for (size_t i = 0; i < count; ++i) out.push_back(generate_flow(profile, i, 2 * i + cls_bit));
  return out;
}

void for_each_flow(const CorpusSpec& spec, const std::function<void(Flow&&)>& sink) {
  GenProfile trojan = default_profile(FlowClass::kTrojan, spec.separability, spec.seed);
  GenProfile benign = default_profile(FlowClass::kBenign, spec.separability, spec.seed);
  if (spec.msgs_per_flow.min > 0) {
    trojan.msgs_per_flow = spec.msgs_per_flow;
    benign.msgs_per_flow = spec.msgs_per_flow;
  }
  trojan.validate();
  benign.validate();
  std::vector<uint8_t> is_trojan(spec.malicious + spec.benign, 0);
  std::fill(is_trojan.begin(), is_trojan.begin() + static_cast<std::ptrdiff_t>(spec.malicious), 1);
  Rng rng(derive_seed(spec.seed, 0x636C6173ULL));
  shuffle(is_trojan, rng);
  for (size_t g = 0; g < is_trojan.size(); ++g) {
    sink(generate_flow(is_trojan[g] != 0 ? trojan : benign, g, g));
  }
}

std::vector<Flow> generate_corpus(const CorpusSpec& spec) {
  std::vector<Flow> out;
  out.reserve(spec.malicious + spec.benign);
  for_each_flow(spec, [&](Flow&& f) { out.push_back(std::move(f)); });
  return out;
}

void write_label_csv(std::ostream& out, std::span<const Flow> flows) {
  out << "key,label\n";
  for (const auto& f : flows) out << f.key.server.host << ',' << ingest::to_string(f.label) << '\n';
}

}  // namespace hstf::synth
