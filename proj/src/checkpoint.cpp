#include "cflnet/checkpoint.hpp"

#include "cflnet/errors.hpp"

namespace cflnet {

namespace {

torch::serialize::InputArchive open_archive(const std::string& path) {
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path);
    } catch (const c10::Error& e) {
        throw DataError("cannot read checkpoint '" + path + "': " + e.what_without_backtrace());
    }
    c10::IValue format;
    if (!archive.try_read("format", format) || !format.isString() || format.toStringRef() != kCheckpointFormat)
        throw DataError("'" + path + "' is not a " + std::string(kCheckpointFormat) + " checkpoint");
    return archive;
}

ModelConfig config_from(torch::serialize::InputArchive& archive, const std::string& path) {
    c10::IValue config;
    if (!archive.try_read("config", config) || !config.isString())
        throw DataError("checkpoint '" + path + "' has no model config");
    auto cfg = ModelConfig::from_json(config.toStringRef());
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw DataError("checkpoint '" + path + "' has an invalid model config: " + e.what());
    }
    return cfg;
}

} // namespace

void save_checkpoint(CflNet& model, const std::string& path) {
    torch::serialize::OutputArchive archive;
    archive.write("format", c10::IValue(std::string(kCheckpointFormat)));
    archive.write("config", c10::IValue(model->config().to_json()));
    torch::serialize::OutputArchive weights;
    model->save(weights);
    archive.write("model", weights);
    try {
        archive.save_to(path);
    } catch (const c10::Error& e) {
        throw DataError("cannot write checkpoint '" + path + "': " + e.what_without_backtrace());
    }
}

CflNet load_checkpoint(const std::string& path) {
    auto archive = open_archive(path);
    CflNet model(config_from(archive, path));
    torch::serialize::InputArchive weights;
    if (!archive.try_read("model", weights)) throw DataError("checkpoint '" + path + "' has no weights");
    try {
        model->load(weights);
    } catch (const c10::Error& e) {
        throw DataError("checkpoint '" + path + "' weights do not match its config: " + e.what_without_backtrace());
    }
    return model;
}

ModelConfig read_checkpoint_config(const std::string& path) {
    auto archive = open_archive(path);
    return config_from(archive, path);
}

} // namespace cflnet
