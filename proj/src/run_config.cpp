#include "digfuse/run_config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "digfuse/errors.hpp"

namespace digfuse {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected unsigned integer, got '" +
                          v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty() || !parts.empty()) parts.push_back(trim(cur));
    return parts;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

struct Field {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& field_registry() {
    auto i = [](int RunConfig::*m, const char* key) {
        return Field{key,
                     [m, key](RunConfig& c, const std::string& v) {
                         c.*m = static_cast<int>(parse_int(key, v));
                     },
                     [m](const RunConfig& c) { return std::to_string(c.*m); }};
    };
    auto d = [](double RunConfig::*m, const char* key) {
        return Field{key,
                     [m, key](RunConfig& c, const std::string& v) {
                         c.*m = parse_double(key, v);
                     },
                     [m](const RunConfig& c) { return fmt_double(c.*m); }};
    };
    auto b = [](bool RunConfig::*m, const char* key) {
        return Field{key,
                     [m, key](RunConfig& c, const std::string& v) {
                         c.*m = parse_bool(key, v);
                     },
                     [m](const RunConfig& c) { return c.*m ? "true" : "false"; }};
    };
    auto s = [](std::string RunConfig::*m, const char* key) {
        return Field{key, [m](RunConfig& c, const std::string& v) { c.*m = v; },
                     [m](const RunConfig& c) { return c.*m; }};
    };
    static const std::vector<Field> fields = {
        Field{"inputs",
              [](RunConfig& c, const std::string& v) {
                  c.inputs = v.empty() ? std::vector<std::string>{} : split(v, ',');
              },
              [](const RunConfig& c) { return join(c.inputs, ","); }},
        s(&RunConfig::out_dir, "out_dir"),
        i(&RunConfig::schedule_T, "schedule_T"),
        d(&RunConfig::beta_start, "beta_start"),
        d(&RunConfig::beta_end, "beta_end"),
        i(&RunConfig::steps, "steps"),
        s(&RunConfig::spacing, "spacing"),
        d(&RunConfig::ramp_exponent, "ramp_exponent"),
        d(&RunConfig::guidance_scale, "guidance_scale"),
        Field{"seed",
              [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
              [](const RunConfig& c) { return std::to_string(c.seed); }},
        i(&RunConfig::dig_interval, "dig_interval"),
        s(&RunConfig::dig_distance, "dig_distance"),
        s(&RunConfig::patch_grid, "patch_grid"),
        d(&RunConfig::temperature, "temperature"),
        b(&RunConfig::auto_scale, "auto_scale"),
        b(&RunConfig::shared_eps, "shared_eps"),
        i(&RunConfig::eps_draws, "eps_draws"),
        s(&RunConfig::weight_mode, "weight_mode"),
        s(&RunConfig::oracle, "oracle"),
        d(&RunConfig::oracle_var, "oracle_var"),
        d(&RunConfig::oracle_mu, "oracle_mu"),
        s(&RunConfig::oracle_atoms, "oracle_atoms"),
        i(&RunConfig::external_timeout_ms, "external_timeout_ms"),
        i(&RunConfig::seeds_for_bands, "seeds_for_bands"),
        b(&RunConfig::emit_metrics, "emit_metrics"),
    };
    return fields;
}

// weight_mode grammar: dynamic | static-equal | static-fixed=w1,w2,...
std::pair<WeightMode, std::vector<double>> parse_weight_mode(const std::string& v) {
    if (v == "dynamic") return {WeightMode::Dynamic, {}};
    if (v == "static-equal") return {WeightMode::StaticEqual, {}};
    const std::string prefix = "static-fixed=";
    if (v.rfind(prefix, 0) == 0) {
        std::vector<double> w;
        for (const std::string& part : split(v.substr(prefix.size()), ','))
            w.push_back(parse_double("weight_mode", part));
        if (w.empty()) throw ConfigError("weight_mode: static-fixed needs weights");
        double sum = 0.0;
        for (double x : w) {
            if (!(x >= 0.0)) throw ConfigError("weight_mode: static-fixed weights must be >= 0");
            sum += x;
        }
        if (std::fabs(sum - 1.0) > 1e-12)
            throw ConfigError("weight_mode: static-fixed weights must sum to 1, got " +
                              fmt_double(sum));
        return {WeightMode::StaticFixed, w};
    }
    throw ConfigError("weight_mode must be dynamic, static-equal or static-fixed=..., got '" +
                      v + "'");
}

std::pair<int, int> parse_patch_grid(const std::string& v) {
    if (v == "global") return {0, 0};
    size_t x = v.find('x');
    if (x == std::string::npos)
        throw ConfigError("patch_grid must be RxC or 'global', got '" + v + "'");
    int r = static_cast<int>(parse_int("patch_grid", v.substr(0, x)));
    int c = static_cast<int>(parse_int("patch_grid", v.substr(x + 1)));
    if (r < 1 || c < 1) throw ConfigError("patch_grid dimensions must be positive");
    return {r, c};
}

DigDistance parse_distance(const std::string& v) {
    if (v == "l1") return DigDistance::L1;
    if (v == "l2") return DigDistance::L2;
    if (v == "ssim") return DigDistance::SSIM;
    throw ConfigError("dig_distance must be l1, l2 or ssim, got '" + v + "'");
}

}  // namespace

FusionConfig RunConfig::fusion_config() const {
    FusionConfig f;
    f.total_steps_N = steps;
    if (spacing == "uniform")
        f.spacing = StepSpacing::Uniform;
    else if (spacing == "coarse_to_fine")
        f.spacing = StepSpacing::CoarseToFine;
    else
        throw ConfigError("spacing must be uniform or coarse_to_fine, got '" + spacing +
                          "'");
    f.ramp_exponent = ramp_exponent;
    f.dig.distance = parse_distance(dig_distance);
    f.dig.interval_S = dig_interval;
    auto [pr, pc] = parse_patch_grid(patch_grid);
    f.dig.patch_rows = pr;
    f.dig.patch_cols = pc;
    f.dig.temperature = temperature;
    f.dig.auto_scale = auto_scale;
    f.dig.shared_eps = shared_eps;
    f.dig.eps_draws = eps_draws;
    f.guidance_scale = guidance_scale;
    f.seed = seed;
    auto [mode, w] = parse_weight_mode(weight_mode);
    f.weight_mode = mode;
    f.fixed_weights = std::move(w);
    return f;
}

NoiseSchedule RunConfig::schedule() const {
    return make_linear_schedule(schedule_T, beta_start, beta_end);
}

void RunConfig::validate() const {
    schedule();                       // validates T and betas
    FusionConfig f = fusion_config();  // validates sampler + gain fields
    f.validate(f.weight_mode == WeightMode::StaticFixed
                   ? static_cast<int>(f.fixed_weights.size())
                   : std::max<int>(1, static_cast<int>(inputs.size())),
               schedule_T);
    if (oracle != "gaussian" && oracle != "empirical" && oracle.rfind("external:", 0) != 0)
        throw ConfigError("oracle must be gaussian, empirical or external:DIR, got '" +
                          oracle + "'");
    if (!(oracle_var > 0.0)) throw ConfigError("oracle_var must be > 0");
    if (external_timeout_ms < 1) throw ConfigError("external_timeout_ms must be >= 1");
    if (seeds_for_bands < 1) throw ConfigError("seeds_for_bands must be >= 1");
}

RunConfig parse_config_text(const std::string& text, const RunConfig& base) {
    RunConfig cfg = base;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        bool found = false;
        for (const Field& f : field_registry()) {
            if (key == f.key) {
                f.set(cfg, value);
                found = true;
                break;
            }
        }
        if (!found)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": unknown config key '" + key + "'");
    }
    return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path, const RunConfig& base) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), base);
}

std::string echo_config(const RunConfig& c) {
    std::vector<std::pair<std::string, std::string>> kv;
    for (const Field& f : field_registry()) kv.emplace_back(f.key, f.get(c));
    std::sort(kv.begin(), kv.end());
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Hashing / manifest

namespace {

std::string hex_digest(const unsigned char* d, unsigned len) {
    static const char* hexd = "0123456789abcdef";
    std::string out(static_cast<size_t>(len) * 2, '0');
    for (unsigned i = 0; i < len; ++i) {
        out[2 * i] = hexd[d[i] >> 4];
        out[2 * i + 1] = hexd[d[i] & 0xf];
    }
    return out;
}

struct MdCtx {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    ~MdCtx() { EVP_MD_CTX_free(ctx); }
};

}  // namespace

std::string sha256_bytes(const void* data, size_t len) {
    MdCtx md;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned dlen = 0;
    if (!md.ctx || EVP_DigestInit_ex(md.ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(md.ctx, data, len) != 1 ||
        EVP_DigestFinal_ex(md.ctx, digest, &dlen) != 1)
        throw InputError("sha256 computation failed");
    return hex_digest(digest, dlen);
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file for hashing: " + path.string());
    MdCtx md;
    if (!md.ctx || EVP_DigestInit_ex(md.ctx, EVP_sha256(), nullptr) != 1)
        throw InputError("sha256 computation failed");
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        if (got > 0 && EVP_DigestUpdate(md.ctx, buf, static_cast<size_t>(got)) != 1)
            throw InputError("sha256 computation failed");
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned dlen = 0;
    if (EVP_DigestFinal_ex(md.ctx, digest, &dlen) != 1)
        throw InputError("sha256 computation failed");
    return hex_digest(digest, dlen);
}

void write_manifest(const std::filesystem::path& out_dir, const RunConfig& cfg,
                    const std::vector<std::string>& argv,
                    const std::vector<std::filesystem::path>& outputs, double wall_ms) {
    std::ofstream out(out_dir / "manifest.txt");
    if (!out) throw InputError("cannot write manifest in " + out_dir.string());
    out << "# schema: manifest.v1\n";
    out << "tool_version = " << kToolVersion << "\n";
    out << "command = " << join(argv, " ") << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "wall_ms = " << fmt_double(wall_ms) << "\n";
    for (const std::string& in_path : cfg.inputs)
        out << "input_sha256 " << in_path << " = " << sha256_file(in_path) << "\n";
    for (const auto& op : outputs)
        out << "output_sha256 " << op.filename().string() << " = " << sha256_file(op)
            << "\n";
    if (!out) throw InputError("manifest write failed in " + out_dir.string());
}

}  // namespace digfuse
