#include "sstage/config.hpp"

#include <charconv>
#include <fstream>

namespace sstage {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

double parse_num(const std::string& v, const std::string& key, long line) {
    double out;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ParseError("config key '" + key + "' has non-numeric value '" + v + "'", line);
    }
    return out;
}

}  // namespace

std::vector<int> parse_mode_list(const std::string& s) {
    std::vector<int> modes;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string tok = trim(s.substr(pos, comma - pos));
        if (tok.empty()) throw ParameterError("empty entry in mode list '" + s + "'");
        int v;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 1) {
            throw ParameterError("bad mode count '" + tok + "' in list '" + s + "'");
        }
        modes.push_back(v);
        pos = comma + 1;
        if (comma == s.size()) break;
    }
    if (modes.empty()) throw ParameterError("mode list is empty");
    return modes;
}

TrainConfig parse_train_config(std::istream& in) {
    TrainConfig cfg;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value, got '" + trimmed + "'", line_no);
        const std::string key = trim(trimmed.substr(0, eq));
        const std::string value = trim(trimmed.substr(eq + 1));
        if (key.empty() || value.empty()) throw ParseError("empty key or value", line_no);

        if (key == "learning_rate") {
            cfg.learning_rate = parse_num(value, key, line_no);
        } else if (key == "epochs") {
            cfg.epochs = static_cast<int>(parse_num(value, key, line_no));
        } else if (key == "modes") {
            cfg.mode_sweep = parse_mode_list(value);
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_num(value, key, line_no));
        } else if (key == "dataset_root") {
            cfg.dataset_root = value;
        } else if (key == "test_set") {
            cfg.test_set = value;
        } else if (key == "optimizer") {
            cfg.optimizer = optimizer_from_string(value);
        } else if (key == "dropout_rate") {
            cfg.dropout_rate = parse_num(value, key, line_no);
        } else if (key == "val_fraction") {
            cfg.val_fraction = parse_num(value, key, line_no);
        } else {
            throw ParseError("unknown config key '" + key + "'", line_no);
        }
    }
    return cfg;
}

TrainConfig parse_train_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return parse_train_config(in);
}

}  // namespace sstage
