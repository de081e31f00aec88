#include <stda/checkpoint.hpp>
#include <stda/errors.hpp>

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stda {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'D', 'A', 'P', 'R', 'M', '\0'};

static_assert(std::endian::native == std::endian::little, "binary checkpoints assume a little-endian host");

template <class T>
void write_pod(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::filesystem::path& path)
{
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in)
        throw LoadError(path.string() + ": truncated checkpoint");
    return v;
}

} // namespace

void save_params_binary(const ParamSet& params, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, kCheckpointFormatVersion);
    write_pod<std::uint64_t>(out, params.size());
    for (const auto& e : params) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
        for (auto d : e.value.shape())
            write_pod<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(e.value.data().data()),
                  static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    }
    if (!out)
        throw Error("write failed for " + path.string());
}

ParamSet load_params_binary(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw LoadError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw LoadError(path.string() + ": not a parameter checkpoint");
    const auto version = read_pod<std::uint32_t>(in, path);
    if (version != kCheckpointFormatVersion)
        throw LoadError(path.string() + ": unsupported format version " + std::to_string(version));
    const auto count = read_pod<std::uint64_t>(in, path);
    ParamSet params;
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto len = read_pod<std::uint32_t>(in, path);
        std::string name(len, '\0');
        in.read(name.data(), len);
        const auto rank = read_pod<std::uint32_t>(in, path);
        Shape shape(rank);
        for (auto& d : shape)
            d = read_pod<std::uint64_t>(in, path);
        std::vector<double> data(shape_product(shape));
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!in)
            throw LoadError(path.string() + ": truncated checkpoint");
        params.add(std::move(name), DenseArray(std::move(shape), std::move(data)));
    }
    return params;
}

std::string params_to_json(const ParamSet& params)
{
    nlohmann::json doc;
    doc["format_version"] = kCheckpointFormatVersion;
    doc["params"] = nlohmann::json::array();
    for (const auto& e : params)
        doc["params"].push_back({{"name", e.name}, {"shape", e.value.shape()}, {"values", e.value.values()}});
    return doc.dump();
}

ParamSet params_from_json(const std::string& text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
        if (doc.at("format_version").get<int>() != kCheckpointFormatVersion)
            throw LoadError("unsupported checkpoint format version");
        ParamSet params;
        for (const auto& p : doc.at("params"))
            params.add(p.at("name").get<std::string>(),
                       DenseArray(p.at("shape").get<Shape>(), p.at("values").get<std::vector<double>>()));
        return params;
    } catch (const nlohmann::json::exception& ex) {
        throw LoadError(std::string("malformed JSON checkpoint: ") + ex.what());
    }
}

void save_params_json(const ParamSet& params, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out << params_to_json(params) << '\n';
}

ParamSet load_params_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw LoadError("cannot open checkpoint " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return params_from_json(buf.str());
}

} // namespace stda
