#include "gsi/container.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "gsi/error.hpp"

namespace gsi {

namespace {

constexpr std::size_t kAlignment = 64;
constexpr const char* kFormatTag = "gsi-tensor-container-v1";

void require_little_endian() {
    if constexpr (std::endian::native != std::endian::little) {
        throw IoError("tensor container: big-endian hosts are not supported");
    }
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::size_t dtype_size(const std::string& dtype, const std::string& tensor_name) {
    if (dtype == "f64le") return 8;
    if (dtype == "f32le") return 4;
    throw IoError("tensor '" + tensor_name + "': unknown dtype '" + dtype + "'");
}

}  // namespace

void TensorContainer::add(const std::string& name, std::vector<std::size_t> shape,
                          std::span<const double> values) {
    require_little_endian();
    if (name.empty()) throw ConfigError("tensor container: empty tensor name");
    if (contains(name)) throw ConfigError("tensor container: duplicate tensor '" + name + "'");
    if (element_count(shape) != values.size()) {
        throw ConfigError("tensor '" + name + "': shape does not match value count");
    }
    Entry e;
    e.name = name;
    e.shape = std::move(shape);
    e.dtype = "f64le";
    e.length = values.size() * sizeof(double);
    e.offset = (blob_.size() + kAlignment - 1) / kAlignment * kAlignment;
    blob_.resize(e.offset + e.length, 0);
    std::memcpy(blob_.data() + e.offset, values.data(), e.length);
    entries_.push_back(std::move(e));
}

void TensorContainer::add_matrix(const std::string& name, const DenseMatrix& m) {
    add(name, {m.rows(), m.cols()}, m.data());
}

void TensorContainer::add_vector(const std::string& name, std::span<const double> v) {
    add(name, {v.size()}, v);
}

bool TensorContainer::contains(const std::string& name) const {
    for (const Entry& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

const TensorContainer::Entry& TensorContainer::find(const std::string& name) const {
    for (const Entry& e : entries_) {
        if (e.name == name) return e;
    }
    throw IoError("tensor container: missing tensor '" + name + "'");
}

std::vector<double> TensorContainer::tensor(const std::string& name) const {
    const Entry& e = find(name);
    const std::size_t esize = dtype_size(e.dtype, e.name);
    const std::size_t n = e.length / esize;
    std::vector<double> out(n);
    if (esize == 8) {
        std::memcpy(out.data(), blob_.data() + e.offset, e.length);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, blob_.data() + e.offset + i * 4, 4);
            out[i] = static_cast<double>(f);
        }
    }
    return out;
}

std::vector<std::size_t> TensorContainer::shape(const std::string& name) const {
    return find(name).shape;
}

DenseMatrix TensorContainer::matrix(const std::string& name) const {
    const Entry& e = find(name);
    if (e.shape.size() != 2) throw IoError("tensor '" + name + "': expected a rank-2 shape");
    DenseMatrix m(e.shape[0], e.shape[1]);
    m.data() = tensor(name);
    return m;
}

void TensorContainer::save(const std::string& base_path) const {
    require_little_endian();
    namespace fs = std::filesystem;
    const fs::path manifest_path = base_path + ".json";
    const fs::path blob_path = base_path + ".bin";
    std::error_code ec;
    if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path(), ec);

    nlohmann::ordered_json manifest;
    manifest["format"] = kFormatTag;
    manifest["blob"] = blob_path.filename().string();
    manifest["meta"] = meta;
    manifest["tensors"] = nlohmann::ordered_json::array();
    for (const Entry& e : entries_) {
        nlohmann::ordered_json t;
        t["name"] = e.name;
        t["shape"] = e.shape;
        t["dtype"] = e.dtype;
        t["offset"] = e.offset;
        t["length"] = e.length;
        manifest["tensors"].push_back(std::move(t));
    }

    {
        std::ofstream f(manifest_path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write manifest: " + manifest_path.string());
        f << manifest.dump(2) << "\n";
        if (!f) throw IoError("failed writing manifest: " + manifest_path.string());
    }
    {
        std::ofstream f(blob_path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write blob: " + blob_path.string());
        f.write(reinterpret_cast<const char*>(blob_.data()),
                static_cast<std::streamsize>(blob_.size()));
        if (!f) throw IoError("failed writing blob: " + blob_path.string());
    }
}

TensorContainer TensorContainer::load(const std::string& base_path) {
    require_little_endian();
    namespace fs = std::filesystem;
    const fs::path manifest_path = base_path + ".json";

    std::ifstream mf(manifest_path, std::ios::binary);
    if (!mf) throw IoError("cannot open manifest: " + manifest_path.string());
    nlohmann::ordered_json manifest;
    try {
        manifest = nlohmann::ordered_json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    if (manifest.value("format", "") != kFormatTag) {
        throw IoError("manifest " + manifest_path.string() + ": unknown format tag");
    }
    if (!manifest.contains("blob") || !manifest.contains("tensors")) {
        throw IoError("manifest " + manifest_path.string() + ": missing blob or tensors field");
    }

    const fs::path blob_path = manifest_path.parent_path() / manifest["blob"].get<std::string>();
    std::ifstream bf(blob_path, std::ios::binary);
    if (!bf) throw IoError("cannot open blob: " + blob_path.string());
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)),
                                    std::istreambuf_iterator<char>());

    TensorContainer out;
    out.meta = manifest.value("meta", nlohmann::ordered_json::object());
    out.blob_ = std::move(blob);
    for (const auto& t : manifest["tensors"]) {
        Entry e;
        try {
            e.name = t.at("name").get<std::string>();
            e.shape = t.at("shape").get<std::vector<std::size_t>>();
            e.dtype = t.at("dtype").get<std::string>();
            e.offset = t.at("offset").get<std::size_t>();
            e.length = t.at("length").get<std::size_t>();
        } catch (const nlohmann::json::exception& ex) {
            throw IoError("manifest " + manifest_path.string() + ": bad tensor entry: " + ex.what());
        }
        const std::size_t esize = dtype_size(e.dtype, e.name);
        if (e.offset % kAlignment != 0) {
            throw IoError("tensor '" + e.name + "': offset is not 64-byte aligned");
        }
        if (e.length != element_count(e.shape) * esize) {
            throw IoError("tensor '" + e.name + "': length does not match shape");
        }
        if (e.offset + e.length > out.blob_.size()) {
            throw IoError("tensor '" + e.name + "': blob is truncated");
        }
        if (out.contains(e.name)) throw IoError("tensor '" + e.name + "': duplicate name");
        out.entries_.push_back(std::move(e));
    }
    return out;
}

}  // namespace gsi
