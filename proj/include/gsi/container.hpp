#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gsi/matrix.hpp"

namespace gsi {

// On-disk tensor artifact: <base>.json manifest plus <base>.bin blob.
// Tensors are stored little-endian ("f64le" when written by us, "f32le"
// accepted on read), each at a 64-byte-aligned offset. The manifest is
// order-preserving JSON, so save() is byte-deterministic for identical
// content.
class TensorContainer {
public:
    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
        std::string dtype;
        std::size_t offset = 0;
        std::size_t length = 0;  // bytes
    };

    nlohmann::ordered_json meta;

    void add(const std::string& name, std::vector<std::size_t> shape, std::span<const double> values);
    void add_matrix(const std::string& name, const DenseMatrix& m);
    void add_vector(const std::string& name, std::span<const double> v);

    bool contains(const std::string& name) const;
    const std::vector<Entry>& entries() const { return entries_; }

    // Always returns doubles; f32le payloads are widened.
    std::vector<double> tensor(const std::string& name) const;
    std::vector<std::size_t> shape(const std::string& name) const;
    DenseMatrix matrix(const std::string& name) const;

    // Writes <base>.json and <base>.bin, creating parent directories.
    void save(const std::string& base_path) const;
    static TensorContainer load(const std::string& base_path);

private:
    const Entry& find(const std::string& name) const;

    std::vector<Entry> entries_;
    std::vector<unsigned char> blob_;
};

}  // namespace gsi
