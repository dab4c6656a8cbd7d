#include "madp/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>

namespace madp::nd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts are unsupported");

namespace {

template <class T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const std::vector<StateEntry>& entries) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    std::ofstream manifest(path + ".manifest", std::ios::trunc);
    if (!manifest)
        throw std::runtime_error("checkpoint: cannot open '" + path + ".manifest' for writing");

    for (const StateEntry& e : entries) {
        const DenseArray& a = *e.arr;
        const std::uint32_t id_len = static_cast<std::uint32_t>(e.id.size());
        const std::uint32_t ndim = static_cast<std::uint32_t>(a.shape().size());
        const std::uint64_t payload =
            sizeof(id_len) + id_len + sizeof(ndim) + ndim * sizeof(std::uint64_t) +
            a.size() * sizeof(double);
        write_pod(out, payload);
        write_pod(out, id_len);
        out.write(e.id.data(), id_len);
        write_pod(out, ndim);
        for (std::size_t d : a.shape()) write_pod(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(a.data()),
                  static_cast<std::streamsize>(a.size() * sizeof(double)));

        manifest << e.id << " " << a.shape_str() << "\n";
    }
    if (!out || !manifest) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

void load_checkpoint(const std::string& path, const std::vector<StateEntry>& entries) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");

    std::map<std::string, StateEntry> by_id;
    for (const StateEntry& e : entries) {
        if (!by_id.emplace(e.id, e).second)
            throw std::runtime_error("checkpoint: duplicate entry id '" + e.id + "'");
    }

    std::size_t loaded = 0;
    while (true) {
        std::uint64_t payload;
        in.read(reinterpret_cast<char*>(&payload), sizeof(payload));
        if (in.eof()) break;
        if (!in) throw std::runtime_error("checkpoint: truncated file");

        const std::uint32_t id_len = read_pod<std::uint32_t>(in);
        std::string id(id_len, '\0');
        in.read(id.data(), id_len);
        const std::uint32_t ndim = read_pod<std::uint32_t>(in);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
        DenseArray tmp(shape);
        in.read(reinterpret_cast<char*>(tmp.data()),
                static_cast<std::streamsize>(tmp.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated record '" + id + "'");

        auto it = by_id.find(id);
        if (it == by_id.end())
            throw std::runtime_error("checkpoint: record '" + id + "' not expected by this model");
        if (it->second.arr->shape() != shape)
            throw std::runtime_error("checkpoint: shape mismatch for '" + id + "': file " +
                                     tmp.shape_str() + " vs model " +
                                     it->second.arr->shape_str());
        *it->second.arr = std::move(tmp);
        by_id.erase(it);
        ++loaded;
    }
    if (!by_id.empty())
        throw std::runtime_error("checkpoint: missing record '" + by_id.begin()->first + "' (" +
                                 std::to_string(by_id.size()) + " entries absent)");
    (void)loaded;
}

} // namespace madp::nd
