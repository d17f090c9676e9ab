#include "cflnet/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cflnet/errors.hpp"

namespace cflnet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end)
        throw InvalidParameter("config key '" + key + "': cannot parse '" + text + "'");
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw InvalidParameter("config key '" + key + "': expected a boolean, got '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [key, value] : TrainConfig{}.entries()) k.push_back(key);
        return k;
    }();
    return keys;
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    if (key == "lr") lr = parse_number<double>(key, value);
    else if (key == "lr_decay") lr_decay = parse_number<double>(key, value);
    else if (key == "lr_step_epochs") lr_step_epochs = parse_number<int>(key, value);
    else if (key == "batch_size") batch_size = parse_number<int>(key, value);
    else if (key == "epochs") epochs = parse_number<int>(key, value);
    else if (key == "max_steps") max_steps = parse_number<int>(key, value);
    else if (key == "image_size") image_size = parse_number<int>(key, value);
    else if (key == "k") k = parse_number<int>(key, value);
    else if (key == "tau") tau = parse_number<double>(key, value);
    else if (key == "ce_weight_untampered") ce_weight_untampered = parse_number<double>(key, value);
    else if (key == "ce_weight_tampered") ce_weight_tampered = parse_number<double>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "contrastive") contrastive = parse_bool(key, value);
    else if (key == "con_batch_reduction") con_batch_reduction = value;
    else if (key == "flip") flip = parse_bool(key, value);
    else if (key == "deterministic") deterministic = parse_bool(key, value);
    else if (key == "threads") threads = parse_number<int>(key, value);
    else if (key == "train_split") train_split = value;
    else if (key == "val_split") val_split = value;
    else if (key == "encoder") encoder = value;
    else if (key == "encoder_stages") encoder_stages = parse_number<int>(key, value);
    else if (key == "embed_dim") embed_dim = parse_number<int>(key, value);
    else if (key == "aspp_channels") aspp_channels = parse_number<int>(key, value);
    else if (key == "aspp_rates") aspp_rates = parse_int_list(key, value);
    else if (key == "head_stride") head_stride = parse_number<int>(key, value);
    else if (key == "freeze_rgb_bn") freeze_rgb_bn = parse_bool(key, value);
    else throw InvalidParameter("unknown config key '" + key + "'");
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw InvalidParameter("lr must be positive");
    if (!(lr_decay > 0) || lr_decay > 1) throw InvalidParameter("lr_decay must be in (0, 1]");
    if (lr_step_epochs < 1) throw InvalidParameter("lr_step_epochs must be positive");
    if (batch_size < 1) throw InvalidParameter("batch_size must be positive");
    if (epochs < 1) throw InvalidParameter("epochs must be positive");
    if (max_steps < 0) throw InvalidParameter("max_steps must be non-negative");
    if (!(tau > 0)) throw InvalidParameter("tau must be positive");
    if (k < 1) throw InvalidParameter("k must be positive");
    if (image_size % k != 0)
        throw InvalidParameter("image_size " + std::to_string(image_size) + " is not divisible by k " + std::to_string(k));
    if (head_stride >= 1 && (image_size / head_stride) % k != 0)
        throw InvalidParameter("projection map size image_size/head_stride is not divisible by k");
    if (ce_weight_untampered <= 0 || ce_weight_tampered <= 0) throw InvalidParameter("CE weights must be positive");
    if (con_batch_reduction != "mean" && con_batch_reduction != "sum")
        throw InvalidParameter("con_batch_reduction must be 'mean' or 'sum'");
    if (threads < 0) throw InvalidParameter("threads must be non-negative");
    model_config().validate();
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
    std::string rates;
    for (std::size_t i = 0; i < aspp_rates.size(); ++i) rates += (i ? "," : "") + std::to_string(aspp_rates[i]);
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    return {{"lr", format_double(lr)},
            {"lr_decay", format_double(lr_decay)},
            {"lr_step_epochs", std::to_string(lr_step_epochs)},
            {"batch_size", std::to_string(batch_size)},
            {"epochs", std::to_string(epochs)},
            {"max_steps", std::to_string(max_steps)},
            {"image_size", std::to_string(image_size)},
            {"k", std::to_string(k)},
            {"tau", format_double(tau)},
            {"ce_weight_untampered", format_double(ce_weight_untampered)},
            {"ce_weight_tampered", format_double(ce_weight_tampered)},
            {"seed", std::to_string(seed)},
            {"contrastive", b(contrastive)},
            {"con_batch_reduction", con_batch_reduction},
            {"flip", b(flip)},
            {"deterministic", b(deterministic)},
            {"threads", std::to_string(threads)},
            {"train_split", train_split},
            {"val_split", val_split},
            {"encoder", encoder},
            {"encoder_stages", std::to_string(encoder_stages)},
            {"embed_dim", std::to_string(embed_dim)},
            {"aspp_channels", std::to_string(aspp_channels)},
            {"aspp_rates", rates},
            {"head_stride", std::to_string(head_stride)},
            {"freeze_rgb_bn", b(freeze_rgb_bn)}};
}

std::string TrainConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
    return out;
}

ModelConfig TrainConfig::model_config() const {
    ModelConfig m;
    m.input_size = image_size;
    m.embed_dim = embed_dim;
    m.aspp_rates = aspp_rates;
    m.aspp_channels = aspp_channels;
    m.encoder = encoder;
    m.encoder_stages = encoder_stages;
    m.head_stride = head_stride;
    m.freeze_rgb_bn = freeze_rgb_bn;
    return m;
}

LossConfig TrainConfig::loss_config() const {
    LossConfig l;
    l.grid = k;
    l.temperature = tau;
    l.ce_weights = {ce_weight_untampered, ce_weight_tampered};
    l.use_contrastive = contrastive;
    l.sum_over_batch = con_batch_reduction == "sum";
    return l;
}

TrainConfig parse_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidParameter("config line " + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw InvalidParameter("override '" + assignment + "' is not KEY=VALUE");
    cfg.set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

double learning_rate(const TrainConfig& cfg, int epoch) {
    return cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_step_epochs);
}

} // namespace cflnet
