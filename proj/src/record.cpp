#include "s2m2/record.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "s2m2/rng.hpp"

namespace s2m2 {

namespace fs = std::filesystem;

static void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back((char)((v >> (8 * i)) & 0xff));
}

static uint32_t get_u32(const std::string& buf, size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= (uint32_t)(unsigned char)buf[off + i] << (8 * i);
    return v;
}

static uint32_t float_bits(float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    return u;
}

static float bits_float(uint32_t u) {
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

void write_record(const EcgRecord& record, const std::string& path) {
    if (record.leads <= 0 || record.length <= 0)
        throw std::invalid_argument("write_record: empty record");
    if ((size_t)record.leads * record.length != record.samples.size())
        throw std::invalid_argument("write_record: sample buffer size mismatch");
    for (double v : record.samples)
        if (!std::isfinite(v)) throw std::invalid_argument("write_record: non-finite sample");
    std::string buf;
    buf.reserve(24 + record.samples.size() * 4);
    buf += "S2M2";
    put_u32(buf, 1u);
    put_u32(buf, (uint32_t)record.leads);
    put_u32(buf, (uint32_t)record.length);
    put_u32(buf, (uint32_t)record.sample_rate_hz);
    put_u32(buf, (uint32_t)record.label);
    for (double v : record.samples) put_u32(buf, float_bits((float)v));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("write_record: cannot open " + path);
    out.write(buf.data(), (std::streamsize)buf.size());
    if (!out) throw format_error("write_record: short write to " + path);
}

EcgRecord read_record(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("read_record: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    if (buf.size() < 24)
        throw format_error("read_record: " + path + ": truncated header, expected 24 bytes, got " +
                           std::to_string(buf.size()) + " (at byte offset 0)");
    if (buf.compare(0, 4, "S2M2") != 0)
        throw format_error("read_record: " + path + ": bad magic (at byte offset 0)");
    uint32_t version = get_u32(buf, 4);
    if (version != 1)
        throw format_error("read_record: " + path + ": unsupported version " +
                           std::to_string(version) + " (at byte offset 4)");
    EcgRecord r;
    r.leads = (int)get_u32(buf, 8);
    r.length = (int)get_u32(buf, 12);
    r.sample_rate_hz = (int)get_u32(buf, 16);
    r.label = (int)get_u32(buf, 20);
    if (r.leads <= 0 || r.length <= 0)
        throw format_error("read_record: " + path + ": empty geometry (at byte offset 8)");
    size_t want = 24 + (size_t)r.leads * r.length * 4;
    if (buf.size() != want)
        throw format_error("read_record: " + path + ": payload size mismatch, expected " +
                           std::to_string(want) + " bytes, got " + std::to_string(buf.size()) +
                           " (at byte offset " + std::to_string(std::min(buf.size(), want)) + ")");
    r.samples.resize((size_t)r.leads * r.length);
    for (size_t i = 0; i < r.samples.size(); ++i)
        r.samples[i] = (double)bits_float(get_u32(buf, 24 + 4 * i));
    r.id = fs::path(path).stem().string();
    return r;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw format_error("unknown split tag '" + name + "'");
}

std::string DatasetManifest::resolve(const ManifestEntry& e) const {
    fs::path p(e.path);
    if (p.is_absolute() || base_dir.empty()) return e.path;
    return (fs::path(base_dir) / p).string();
}

void write_manifest(const DatasetManifest& manifest, const std::string& csv_path) {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("write_manifest: cannot open " + csv_path);
    out << "path,label,split\n";
    for (const auto& e : manifest.entries)
        out << e.path << "," << e.label << "," << split_name(e.split) << "\n";
}

DatasetManifest read_manifest(const std::string& csv_path, bool check_paths) {
    std::ifstream in(csv_path);
    if (!in) throw format_error("read_manifest: cannot open " + csv_path);
    DatasetManifest m;
    m.base_dir = fs::path(csv_path).parent_path().string();
    std::string line;
    if (!std::getline(in, line)) throw format_error("read_manifest: empty file " + csv_path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "path,label,split")
        throw format_error("read_manifest: bad header '" + line + "' in " + csv_path);
    int max_label = -1;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t c1 = line.rfind(',');
        size_t c0 = (c1 == std::string::npos) ? std::string::npos : line.rfind(',', c1 - 1);
        if (c0 == std::string::npos)
            throw format_error("read_manifest: malformed line " + std::to_string(lineno));
        ManifestEntry e;
        e.path = line.substr(0, c0);
        e.label = std::stoi(line.substr(c0 + 1, c1 - c0 - 1));
        e.split = split_from_name(line.substr(c1 + 1));
        if (e.label < 0)
            throw format_error("read_manifest: negative label on line " + std::to_string(lineno));
        max_label = std::max(max_label, e.label);
        m.entries.push_back(std::move(e));
    }
    for (int i = 0; i <= max_label; ++i) m.class_names.push_back("class_" + std::to_string(i));
    if (check_paths)
        for (const auto& e : m.entries)
            if (!fs::exists(m.resolve(e)))
                throw format_error("read_manifest: missing record file " + m.resolve(e));
    return m;
}

DatasetManifest split_manifest(const DatasetManifest& manifest, const double fractions[3],
                               uint64_t seed) {
    double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::fabs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split_manifest: fractions sum to " + std::to_string(sum));
    for (int i = 0; i < 3; ++i)
        if (fractions[i] < 0) throw std::invalid_argument("split_manifest: negative fraction");

    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < manifest.entries.size(); ++i)
        by_class[manifest.entries[i].label].push_back(i);

    DatasetManifest out = manifest;
    Rng rng(seed);
    long long global_assigned[3] = {0, 0, 0};
    long long global_total = 0;
    for (auto& [label, idxs] : by_class) {
        if ((int)idxs.size() < 3)
            throw std::invalid_argument("split_manifest: class " + std::to_string(label) +
                                        " has " + std::to_string(idxs.size()) +
                                        " records, fewer than the 3 splits");
        rng.shuffle(idxs);
        const int n = (int)idxs.size();
        // Largest-remainder allocation keeps per-class counts exact; remainder
        // ties go to the globally most under-allocated split so the overall
        // proportions come out right too.
        int counts[3];
        double rem[3];
        int assigned = 0;
        for (int k = 0; k < 3; ++k) {
            double want = fractions[k] * n;
            counts[k] = (int)std::floor(want);
            rem[k] = want - counts[k];
            assigned += counts[k];
        }
        while (assigned < n) {
            int best = 0;
            for (int k = 1; k < 3; ++k) {
                if (rem[k] > rem[best] + 1e-12) {
                    best = k;
                } else if (rem[k] > rem[best] - 1e-12) {
                    double deficit_k = fractions[k] * (double)global_total - (double)global_assigned[k];
                    double deficit_b =
                        fractions[best] * (double)global_total - (double)global_assigned[best];
                    if (deficit_k > deficit_b + 1e-12) best = k;
                }
            }
            ++counts[best];
            rem[best] = -1.0;
            ++assigned;
        }
        for (int k = 0; k < 3; ++k) global_assigned[k] += counts[k];
        global_total += n;
        size_t pos = 0;
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < counts[k]; ++j)
                out.entries[idxs[pos++]].split = (Split)k;
    }
    return out;
}

}  // namespace s2m2
