#include "rre/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "rre/errors.hpp"

namespace rre {

namespace {

constexpr char kMagic[4] = {'R', 'R', 'E', 'C'};

void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    put_bytes(os, b, 4);
}

void put_i64(std::ostream& os, std::int64_t v) {
    auto u = static_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
    put_bytes(os, b, 8);
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    put_bytes(os, s.data(), s.size());
}

void put_f64_array(std::ostream& os, const double* d, int n) {
    for (int i = 0; i < n; ++i) {
        std::uint64_t u;
        std::memcpy(&u, &d[i], 8);
        unsigned char b[8];
        for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((u >> (8 * k)) & 0xFF);
        put_bytes(os, b, 8);
    }
}

void need(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n) {
        throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
    }
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    need(is, b, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::int64_t get_i64(std::istream& is, const char* what) {
    unsigned char b[8];
    need(is, b, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<std::int64_t>(v);
}

std::string get_string(std::istream& is, const char* what) {
    std::uint32_t n = get_u32(is, what);
    if (n > (1u << 20)) throw CheckpointError("implausible string length in checkpoint");
    std::string s(n, '\0');
    if (n) need(is, s.data(), n, what);
    return s;
}

Tensor get_f64_tensor(std::istream& is, const std::vector<int>& shape, const char* what) {
    Tensor t = Tensor::zeros(shape);
    for (int i = 0; i < t.size(); ++i) {
        unsigned char b[8];
        need(is, b, 8, what);
        std::uint64_t u = 0;
        for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        double d;
        std::memcpy(&d, &u, 8);
        t[i] = d;
    }
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const ParamStore*>>& sections) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path);
    put_bytes(os, kMagic, 4);
    unsigned char ver = kCheckpointVersion;
    put_bytes(os, &ver, 1);
    put_u32(os, static_cast<std::uint32_t>(sections.size()));
    for (const auto& [name, store] : sections) {
        put_string(os, name);
        put_i64(os, store->step());
        put_u32(os, static_cast<std::uint32_t>(store->count()));
        for (const auto& [pname, slot] : *store) {
            put_string(os, pname);
            const auto& shape = slot.value.shape();
            put_u32(os, static_cast<std::uint32_t>(shape.size()));
            for (int e : shape) put_u32(os, static_cast<std::uint32_t>(e));
            put_f64_array(os, slot.value.data(), slot.value.size());
            put_f64_array(os, slot.m.data(), slot.m.size());
            put_f64_array(os, slot.v.data(), slot.v.size());
        }
    }
    if (!os) throw CheckpointError("failed writing checkpoint: " + path);
}

std::map<std::string, ParamStore> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    need(is, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw CheckpointError("bad checkpoint magic in " + path);
    }
    unsigned char ver;
    need(is, &ver, 1, "version");
    if (ver != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(ver));
    }
    std::map<std::string, ParamStore> out;
    const std::uint32_t nsec = get_u32(is, "section count");
    for (std::uint32_t si = 0; si < nsec; ++si) {
        std::string sname = get_string(is, "section name");
        ParamStore store;
        store.set_step(get_i64(is, "step"));
        const std::uint32_t np = get_u32(is, "param count");
        for (std::uint32_t pi = 0; pi < np; ++pi) {
            std::string pname = get_string(is, "param name");
            const std::uint32_t rank = get_u32(is, "rank");
            if (rank > 4) throw CheckpointError("implausible tensor rank in checkpoint");
            std::vector<int> shape(rank);
            for (auto& e : shape) e = static_cast<int>(get_u32(is, "extent"));
            Tensor value = get_f64_tensor(is, shape, "value");
            Tensor m = get_f64_tensor(is, shape, "m");
            Tensor v = get_f64_tensor(is, shape, "v");
            store.add(pname, std::move(value));
            store.slot(pname).m = std::move(m);
            store.slot(pname).v = std::move(v);
        }
        out.emplace(std::move(sname), std::move(store));
    }
    return out;
}

}  // namespace rre
