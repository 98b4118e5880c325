#include "io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace metano {

namespace {

constexpr unsigned char kMagic[4] = {'M', 'N', 'O', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindDataset = 1;
constexpr std::uint32_t kKindCheckpoint = 2;

struct Writer {
    std::vector<unsigned char> bytes;

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f64v(const std::vector<double>& v) {
        for (double x : v) f64(x);
    }
};

struct Reader {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw FormatError(path + ": truncated file (need " + std::to_string(pos + n) +
                              " bytes, have " + std::to_string(bytes.size()) + ")");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void f64v(std::vector<double>& out, std::size_t n) {
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = f64();
    }
};

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError(path + ": cannot open for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError(path + ": write failed");
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError(path + ": cannot open for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

void check_preamble(Reader& r, std::uint32_t want_kind) {
    r.need(4);
    if (std::memcmp(r.bytes.data(), kMagic, 4) != 0) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%02x %02x %02x %02x", r.bytes[0], r.bytes[1], r.bytes[2],
                      r.bytes[3]);
        throw FormatError(r.path + ": bad magic bytes [" + buf + "], expected 'MNO1'");
    }
    r.pos = 4;
    std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError(r.path + ": unsupported version " + std::to_string(version));
    std::uint32_t kind = r.u32();
    if (kind != want_kind)
        throw FormatError(r.path + ": kind " + std::to_string(kind) + ", expected " +
                          std::to_string(want_kind));
}

std::uint32_t group_tag(Group g) {
    return g == Group::Lift ? 0u : g == Group::Iter ? 1u : 2u;
}
Group tag_group(std::uint32_t t, const std::string& path) {
    if (t > 2) throw FormatError(path + ": bad group tag " + std::to_string(t));
    return t == 0 ? Group::Lift : t == 1 ? Group::Iter : Group::Proj;
}

void write_shape(Writer& w, const IFNOShape& shape, const Grid& grid) {
    w.u32(static_cast<std::uint32_t>(shape.dim));
    w.u32(static_cast<std::uint32_t>(grid.m));
    w.u32(static_cast<std::uint32_t>(shape.d_g));
    w.u32(static_cast<std::uint32_t>(shape.d_h));
    w.u32(static_cast<std::uint32_t>(shape.d_q));
    w.u32(static_cast<std::uint32_t>(shape.d_u));
    w.u32(static_cast<std::uint32_t>(shape.layers));
    w.u32(static_cast<std::uint32_t>(shape.k_max));
}

void read_shape(Reader& r, IFNOShape& shape, Grid& grid) {
    shape.dim = static_cast<int>(r.u32());
    int m = static_cast<int>(r.u32());
    shape.d_g = static_cast<int>(r.u32());
    shape.d_h = static_cast<int>(r.u32());
    shape.d_q = static_cast<int>(r.u32());
    shape.d_u = static_cast<int>(r.u32());
    shape.layers = static_cast<int>(r.u32());
    shape.k_max = static_cast<int>(r.u32());
    try {
        grid = Grid(shape.dim, m);
    } catch (const std::invalid_argument& e) {
        throw FormatError(r.path + ": bad grid header: " + e.what());
    }
}

void append_checksum(Writer& w) {
    std::uint64_t sum = fnv1a(w.bytes.data() + 12, w.bytes.size() - 12);
    w.u64(sum);
}

void verify_checksum(Reader& r) {
    if (r.bytes.size() < 20) throw FormatError(r.path + ": too short for a checkpoint");
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
        stored |= static_cast<std::uint64_t>(r.bytes[r.bytes.size() - 8 + i]) << (8 * i);
    std::uint64_t actual = fnv1a(r.bytes.data() + 12, r.bytes.size() - 20);
    if (stored != actual) throw FormatError(r.path + ": checksum mismatch");
}

} // namespace

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

void save_dataset(const std::string& path, const TaskDataset& ds) {
    const Grid& grid = ds.spec.b.grid;
    Writer w;
    w.bytes.assign(kMagic, kMagic + 4);
    w.u32(kVersion);
    w.u32(kKindDataset);
    w.u32(static_cast<std::uint32_t>(grid.dim));
    w.u32(static_cast<std::uint32_t>(grid.m));
    int d_g = ds.context.empty() ? 1 : ds.context.front().g.channels;
    int d_u = ds.context.empty() ? 1 : ds.context.front().u.channels;
    w.u32(static_cast<std::uint32_t>(d_g));
    w.u32(static_cast<std::uint32_t>(d_u));
    w.u32(static_cast<std::uint32_t>(ds.context.size()));
    w.u32(static_cast<std::uint32_t>(ds.target.size()));
    w.u32(ds.spec.family == Family::Reaction ? 0u : 1u);
    w.u64(ds.spec.task_seed);
    w.u64(ds.data_seed);
    w.f64(ds.spec.amplitude);
    w.f64(ds.solver_tol);
    w.f64v(ds.spec.b.values);
    auto rec = [&](const SamplePair& s) {
        w.f64v(s.g.values);
        w.f64v(s.u.values);
    };
    for (const auto& s : ds.context) rec(s);
    for (const auto& s : ds.target) rec(s);
    write_file(path, w.bytes);
}

TaskDataset load_dataset(const std::string& path) {
    auto bytes = read_file(path);
    Reader r{bytes, 0, path};
    check_preamble(r, kKindDataset);
    int dim = static_cast<int>(r.u32());
    int m = static_cast<int>(r.u32());
    int d_g = static_cast<int>(r.u32());
    int d_u = static_cast<int>(r.u32());
    std::uint32_t n_ctx = r.u32();
    std::uint32_t n_tgt = r.u32();
    std::uint32_t fam = r.u32();
    if (fam > 1) throw FormatError(path + ": bad family tag " + std::to_string(fam));
    if (d_g < 1 || d_u < 1) throw FormatError(path + ": bad channel counts");
    Grid grid;
    try {
        grid = Grid(dim, m);
    } catch (const std::invalid_argument& e) {
        throw FormatError(path + ": bad grid header: " + e.what());
    }
    TaskDataset ds;
    ds.spec.family = fam == 0 ? Family::Reaction : Family::Diffusion;
    ds.spec.task_seed = r.u64();
    ds.data_seed = r.u64();
    ds.spec.amplitude = r.f64();
    ds.solver_tol = r.f64();
    const std::size_t nodes = static_cast<std::size_t>(grid.node_count());
    // declared lengths checked before any record is consumed
    std::size_t expect = r.pos + nodes * 8 +
                         static_cast<std::size_t>(n_ctx + n_tgt) * nodes *
                             (static_cast<std::size_t>(d_g) + d_u) * 8;
    if (bytes.size() != expect)
        throw FormatError(path + ": payload length " + std::to_string(bytes.size()) +
                          ", expected " + std::to_string(expect));
    ds.spec.b = Field(grid, 1);
    r.f64v(ds.spec.b.values, nodes);
    auto rec = [&] {
        SamplePair s{Field(grid, d_g), Field(grid, d_u)};
        r.f64v(s.g.values, nodes * static_cast<std::size_t>(d_g));
        r.f64v(s.u.values, nodes * static_cast<std::size_t>(d_u));
        return s;
    };
    for (std::uint32_t i = 0; i < n_ctx; ++i) ds.context.push_back(rec());
    for (std::uint32_t i = 0; i < n_tgt; ++i) ds.target.push_back(rec());
    return ds;
}

void save_checkpoint(const std::string& path, const IFNOModel& model) {
    Writer w;
    w.bytes.assign(kMagic, kMagic + 4);
    w.u32(kVersion);
    w.u32(kKindCheckpoint);
    write_shape(w, model.shape, model.grid);
    w.u32(7u); // all three groups present
    w.u32(0u); // no task blocks
    w.u32(0u); // adapt group tag unused
    for (int id : model.slots.all()) w.f64v(model.store.slot(id).value);
    append_checksum(w);
    write_file(path, w.bytes);
}

IFNOModel load_checkpoint_model(const std::string& path) {
    auto bytes = read_file(path);
    Reader r{bytes, 0, path};
    check_preamble(r, kKindCheckpoint);
    verify_checksum(r);
    IFNOModel model;
    read_shape(r, model.shape, model.grid);
    std::uint32_t flags = r.u32();
    std::uint32_t tasks = r.u32();
    r.u32(); // adapt tag
    if (flags != 7u || tasks != 0u)
        throw FormatError(path + ": not a plain model checkpoint (flags " +
                          std::to_string(flags) + ", task blocks " + std::to_string(tasks) + ")");
    model.slots = add_ifno_slots(model.store, model.shape, model.grid);
    std::size_t expect = r.pos + model.store.total_size() * 8 + 8;
    if (bytes.size() != expect)
        throw FormatError(path + ": payload length " + std::to_string(bytes.size()) +
                          ", expected " + std::to_string(expect));
    for (int id : model.slots.all()) {
        auto& slot = model.store.slot(id);
        r.f64v(slot.value, slot.value.size());
    }
    return model;
}

void save_meta_state(const std::string& path, const MetaState& state) {
    Writer w;
    w.bytes.assign(kMagic, kMagic + 4);
    w.u32(kVersion);
    w.u32(kKindCheckpoint);
    write_shape(w, state.shape, state.grid);
    std::uint32_t flags = 7u & ~(1u << group_tag(state.adapt_group));
    w.u32(flags);
    w.u32(static_cast<std::uint32_t>(state.task_values.size()));
    w.u32(group_tag(state.adapt_group));
    for (const auto& block : state.shared_values) w.f64v(block);
    for (const auto& task : state.task_values)
        for (const auto& block : task) w.f64v(block);
    append_checksum(w);
    write_file(path, w.bytes);
}

MetaState load_meta_state(const std::string& path) {
    auto bytes = read_file(path);
    Reader r{bytes, 0, path};
    check_preamble(r, kKindCheckpoint);
    verify_checksum(r);
    MetaState state;
    read_shape(r, state.shape, state.grid);
    std::uint32_t flags = r.u32();
    std::uint32_t tasks = r.u32();
    state.adapt_group = tag_group(r.u32(), path);
    if (tasks == 0) throw FormatError(path + ": checkpoint carries no task blocks");
    if (flags != (7u & ~(1u << group_tag(state.adapt_group))))
        throw FormatError(path + ": group flags inconsistent with adapt tag");

    // scratch slot layout dictates the expected block sizes
    ParamStore scratch;
    std::vector<std::vector<double>*> shared_dst;
    std::size_t shared_doubles = 0, adapt_doubles = 0;
    std::vector<std::size_t> shared_sizes, adapt_sizes;
    for (Group g : {Group::Lift, Group::Iter, Group::Proj}) {
        auto ids = add_group_slots(scratch, state.shape, state.grid, g, "");
        for (int id : ids) {
            std::size_t n = scratch.slot(id).value.size();
            if (g == state.adapt_group) {
                adapt_sizes.push_back(n);
                adapt_doubles += n;
            } else {
                shared_sizes.push_back(n);
                shared_doubles += n;
            }
        }
    }
    std::size_t expect = r.pos + (shared_doubles + tasks * adapt_doubles) * 8 + 8;
    if (bytes.size() != expect)
        throw FormatError(path + ": payload length " + std::to_string(bytes.size()) +
                          ", expected " + std::to_string(expect));
    for (std::size_t n : shared_sizes) {
        state.shared_values.emplace_back();
        r.f64v(state.shared_values.back(), n);
    }
    for (std::uint32_t t = 0; t < tasks; ++t) {
        state.task_values.emplace_back();
        for (std::size_t n : adapt_sizes) {
            state.task_values.back().emplace_back();
            r.f64v(state.task_values.back().back(), n);
        }
    }
    return state;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const char* ws = " \t\r";
        auto a = s.find_first_not_of(ws);
        if (a == std::string::npos) return std::string();
        auto b = s.find_last_not_of(ws);
        return s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw FormatError("config line " + std::to_string(lineno) + ": empty key");
        if (kv.contains(key))
            throw FormatError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        kv[key] = val;
    }
    return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError(path + ": cannot open config");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_kv(ss.str());
}

} // namespace metano
