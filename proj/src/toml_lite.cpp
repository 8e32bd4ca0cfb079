#include "toml_lite.hpp"

#include "optcalib/errors.hpp"

#include <cctype>
#include <cstdlib>

namespace optcalib {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("toml line " + std::to_string(line) + ": " + msg);
}

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Cut a trailing comment, respecting double-quoted strings.
std::string drop_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    return true;
}

nlohmann::json parse_scalar(const std::string& raw, int line) {
    const std::string v = strip(raw);
    if (v.empty()) fail(line, "empty value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') fail(line, "unterminated string");
        const std::string body = v.substr(1, v.size() - 2);
        if (body.find('"') != std::string::npos) fail(line, "embedded quote in string");
        return body;
    }
    if (v == "true") return true;
    if (v == "false") return false;

    char* end = nullptr;
    const long long i = std::strtoll(v.c_str(), &end, 10);
    if (end && *end == '\0' && v.find_first_of(".eE") == std::string::npos)
        return i;
    const double d = std::strtod(v.c_str(), &end);
    if (end && *end == '\0') return d;
    fail(line, "cannot parse value '" + v + "'");
}

nlohmann::json parse_value(const std::string& raw, int line) {
    const std::string v = strip(raw);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') fail(line, "unterminated array");
        nlohmann::json arr = nlohmann::json::array();
        std::string body = v.substr(1, v.size() - 2);
        std::size_t pos = 0;
        bool in_str = false;
        std::string item;
        for (pos = 0; pos <= body.size(); ++pos) {
            const char c = pos < body.size() ? body[pos] : ',';
            if (c == '"') in_str = !in_str;
            if (c == ',' && !in_str) {
                const std::string t = strip(item);
                if (!t.empty()) arr.push_back(parse_scalar(t, line));
                item.clear();
            } else {
                item += c;
            }
        }
        if (in_str) fail(line, "unterminated string in array");
        return arr;
    }
    return parse_scalar(v, line);
}

}  // namespace

nlohmann::json parse_toml_lite(const std::string& text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;

    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        std::string line = text.substr(start, nl == std::string::npos ? std::string::npos
                                                                      : nl - start);
        start = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        line = strip(drop_comment(line));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated table header");
            const std::string name = strip(line.substr(1, line.size() - 2));
            if (!valid_key(name)) fail(line_no, "bad table name '" + name + "'");
            if (root.contains(name)) fail(line_no, "duplicate table '" + name + "'");
            root[name] = nlohmann::json::object();
            table = &root[name];
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key = value");
        const std::string key = strip(line.substr(0, eq));
        if (!valid_key(key)) fail(line_no, "bad key '" + key + "'");
        if (table->contains(key)) fail(line_no, "duplicate key '" + key + "'");
        (*table)[key] = parse_value(line.substr(eq + 1), line_no);
    }
    return root;
}

}  // namespace optcalib
