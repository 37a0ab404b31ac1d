// ECG record storage, dataset manifests, and stratified splitting.

#ifndef S2M2_RECORD_HPP
#define S2M2_RECORD_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2m2 {

class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

struct EcgRecord {
    int leads = 0;
    int length = 0;
    int sample_rate_hz = 0;
    int label = 0;
    std::string id;
    std::vector<double> samples;  // lead-major, leads x length

    const double* lead(int i) const { return samples.data() + (size_t)i * length; }
    double* lead(int i) { return samples.data() + (size_t)i * length; }
    std::vector<double> lead_vec(int i) const {
        return std::vector<double>(lead(i), lead(i) + length);
    }
};

// On disk (little-endian): "S2M2", u32 version=1, u32 leads, u32 length,
// u32 sample_rate_hz, u32 label, then leads*length float32 samples
// lead-major. 24 header bytes before the payload.
void write_record(const EcgRecord& record, const std::string& path);
EcgRecord read_record(const std::string& path);

enum class Split { train, val, test };
const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    int label = 0;
    Split split = Split::train;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names;
    std::string base_dir;  // directory the paths resolve against

    std::string resolve(const ManifestEntry& e) const;
    int class_count() const { return (int)class_names.size(); }
};

// CSV with header "path,label,split", UTF-8, LF line endings.
void write_manifest(const DatasetManifest& manifest, const std::string& csv_path);
DatasetManifest read_manifest(const std::string& csv_path, bool check_paths = true);

// Stratified split, deterministic per seed. fractions must sum to 1 within
// 1e-9; every class needs at least as many records as there are splits.
DatasetManifest split_manifest(const DatasetManifest& manifest, const double fractions[3],
                               uint64_t seed);

}  // namespace s2m2

#endif
