#include "haicu/checkpoint.hpp"

#include "haicu/errors.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace haicu {

namespace {

std::string dtype_name(torch::Dtype d) {
    switch (d) {
        case torch::kFloat: return "F32";
        case torch::kDouble: return "F64";
        default: throw InvalidParameter("unsupported parameter dtype");
    }
}

torch::Dtype dtype_from(const std::string& s) {
    if (s == "F32") return torch::kFloat;
    if (s == "F64") return torch::kDouble;
    throw ParseError(0, "unsupported tensor dtype " + s);
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64(const std::string& in) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[static_cast<std::size_t>(i)]);
    return v;
}

}  // namespace

std::string fingerprint(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, HaicuNet& model, const nlohmann::json& run) {
    std::map<std::string, torch::Tensor> tensors;
    for (const auto& item : model->named_parameters()) tensors[item.key()] = item.value().detach().contiguous();

    nlohmann::json header = nlohmann::json::object();
    header["__metadata__"] = {{"format", "haicu"},
                              {"config", model->config().to_json().dump()},
                              {"run", run.dump()}};
    std::string blob;
    for (const auto& [name, t] : tensors) {
        const auto begin = blob.size();
        const auto nbytes = static_cast<std::size_t>(t.numel()) * t.element_size();
        blob.append(static_cast<const char*>(t.data_ptr()), nbytes);
        header[name] = {{"dtype", dtype_name(t.scalar_type())},
                        {"shape", t.sizes().vec()},
                        {"data_offsets", {begin, blob.size()}}};
    }
    std::string head = header.dump();
    while (head.size() % 8 != 0) head.push_back(' ');
    std::string out;
    put_u64(out, head.size());
    out += head;
    out += blob;

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw NotFound("checkpoint not found: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8) throw ParseError(0, "checkpoint too short");
    const auto head_len = get_u64(bytes);
    if (head_len > bytes.size() - 8) throw ParseError(0, "checkpoint header length out of range");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(8, head_len));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("checkpoint header: ") + e.what());
    }
    const std::size_t data_start = 8 + head_len;

    LoadedCheckpoint out;
    ModelConfig cfg;
    try {
        const auto& meta = header.at("__metadata__");
        cfg = ModelConfig::from_json(nlohmann::json::parse(meta.at("config").get<std::string>()));
        out.run = nlohmann::json::parse(meta.value("run", std::string("{}")));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("checkpoint metadata: ") + e.what());
    }
    out.model = HaicuNet(cfg);
    torch::NoGradGuard no_grad;
    auto params = out.model->named_parameters();
    for (auto& item : params) {
        if (!header.contains(item.key())) throw ParseError(0, "checkpoint lacks tensor " + item.key());
        const auto& entry = header.at(item.key());
        const auto dtype = dtype_from(entry.at("dtype").get<std::string>());
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        const auto offsets = entry.at("data_offsets").get<std::vector<std::size_t>>();
        if (shape != item.value().sizes().vec()) throw ShapeMismatch("tensor " + item.key() + " has the wrong shape");
        if (offsets.size() != 2 || offsets[1] < offsets[0] || data_start + offsets[1] > bytes.size()) {
            throw ParseError(0, "bad offsets for tensor " + item.key());
        }
        auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
        const auto nbytes = static_cast<std::size_t>(t.numel()) * t.element_size();
        if (nbytes != offsets[1] - offsets[0]) throw ParseError(0, "size mismatch for tensor " + item.key());
        std::memcpy(t.data_ptr(), bytes.data() + data_start + offsets[0], nbytes);
        if (dtype != item.value().scalar_type()) item.value().set_data(item.value().to(dtype));
        item.value().copy_(t);
    }
    out.id = fingerprint(bytes);
    return out;
}

}  // namespace haicu
