#pragma once

// Files written and read by the harness: dataset CSV with a JSON sidecar,
// detector reports as JSON, and limit-law draws as float64 binary.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "broken_sample/asymptotics.hpp"
#include "broken_sample/detectors.hpp"
#include "broken_sample/errors.hpp"
#include "broken_sample/models.hpp"

namespace broken_sample {

using json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kDatasetFormat = "bsp-dataset/1";
inline constexpr const char* kLimitLawFormat = "bsp-limit-law/1";
inline constexpr const char* kLimitLawMagic = "BSPLAW1\n";

/// Malformed file content. `row` is the 1-based line number (0 when not row-specific).
class ParseError : public InvalidInput {
public:
    ParseError(const std::string& file, std::size_t row, const std::string& what)
        : InvalidInput(file + (row ? ": row " + std::to_string(row) : std::string()) + ": " + what), row(row) {}
    std::size_t row;
};

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// FNV-1a 64, hex encoded.
inline std::string digest_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path);
    out << bytes;
    if (!out) throw InvalidInput("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Models

inline json model_to_json(const JointModel& model) {
    json j;
    j["kind"] = model.kind();
    if (auto* g = std::get_if<GaussianParams>(&model.params())) {
        j["d"] = g->d;
        j["rho"] = g->rho;
    } else if (auto* b = std::get_if<BernoulliParams>(&model.params())) {
        j["d"] = b->d;
        j["q"] = b->q;
        j["rho"] = b->rho;
    } else {
        const auto& t = std::get<DiscreteParams>(model.params()).joint;
        json rows = json::array();
        for (Eigen::Index i = 0; i < t.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index k = 0; k < t.cols(); ++k) row.push_back(t(i, k));
            rows.push_back(row);
        }
        j["joint"] = rows;
    }
    return j;
}

namespace detail {

template <typename T>
T json_field(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) throw InvalidInput(path + "." + key + ": missing");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidInput(path + "." + key + ": wrong type");
    }
}

}  // namespace detail

inline JointModel model_from_json(const json& j, const std::string& path = "model") {
    const auto kind = detail::json_field<std::string>(j, "kind", path);
    try {
        if (kind == "gaussian")
            return JointModel::gaussian(detail::json_field<std::size_t>(j, "d", path), detail::json_field<double>(j, "rho", path));
        if (kind == "bernoulli")
            return JointModel::bernoulli(detail::json_field<std::size_t>(j, "d", path), detail::json_field<double>(j, "q", path),
                                         detail::json_field<double>(j, "rho", path));
        if (kind == "discrete") {
            const auto rows = detail::json_field<std::vector<std::vector<double>>>(j, "joint", path);
            if (rows.empty() || rows[0].empty()) throw InvalidInput("joint table is empty");
            JointTable t(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != rows[0].size()) throw InvalidInput("joint table rows differ in length");
                for (std::size_t k = 0; k < rows[i].size(); ++k)
                    t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
            }
            return JointModel::discrete(std::move(t));
        }
    } catch (const ParseError&) {
        throw;
    } catch (const InvalidInput& e) {
        const std::string msg = e.what();
        if (msg.rfind(path + ".", 0) == 0) throw;
        throw InvalidInput(path + ": " + msg);
    }
    throw InvalidInput(path + ".kind: unknown model '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Datasets

/// CSV body: header "sample,index,c0,..,c{d-1}", then one row per point,
/// X rows before Y rows. Values use round-trip decimal.
inline std::string dataset_csv(const Dataset& ds) {
    std::string out = "sample,index";
    for (std::size_t c = 0; c < ds.xs.dim(); ++c) out += ",c" + std::to_string(c);
    out += '\n';
    auto emit = [&](const PointSet& pts, const char* tag) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            out += tag;
            out += ',' + std::to_string(i);
            for (double v : pts[i]) out += ',' + format_double(v);
            out += '\n';
        }
    };
    emit(ds.xs, "X");
    emit(ds.ys, "Y");
    return out;
}

inline json dataset_sidecar(const Dataset& ds, const JointModel& model, const std::string& csv_bytes) {
    json j;
    j["format"] = kDatasetFormat;
    j["version"] = kToolVersion;
    j["model"] = model_to_json(model);
    j["n"] = ds.n();
    j["m"] = ds.m();
    j["d"] = ds.xs.dim();
    j["hypothesis"] = to_string(ds.hypothesis);
    j["seed"] = ds.seed;
    j["digest"] = digest_hex(csv_bytes);
    return j;
}

/// Writes `path` (CSV) and `path + ".json"` (sidecar).
inline void write_dataset(const std::string& path, const Dataset& ds, const JointModel& model) {
    const std::string csv = dataset_csv(ds);
    write_file(path, csv);
    write_file(path + ".json", dataset_sidecar(ds, model, csv).dump(2) + "\n");
}

inline Dataset parse_dataset_csv(const std::string& bytes, std::size_t dim, Hypothesis h, std::uint64_t seed,
                                 const std::string& name = "dataset") {
    PointSet xs(dim), ys(dim);
    std::istringstream in(bytes);
    std::string line;
    std::size_t row = 0;
    std::vector<double> point(dim);
    while (std::getline(in, line)) {
        ++row;
        if (row == 1) {
            if (line.rfind("sample,index", 0) != 0) throw ParseError(name, row, "missing header 'sample,index,...'");
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != dim + 2)
            throw ParseError(name, row, "expected " + std::to_string(dim + 2) + " fields, found " + std::to_string(fields.size()));
        if (fields[0] != "X" && fields[0] != "Y") throw ParseError(name, row, "sample must be X or Y");
        PointSet& target = fields[0] == "X" ? xs : ys;
        std::size_t index = 0;
        const auto ir = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), index);
        if (ir.ec != std::errc() || ir.ptr != fields[1].data() + fields[1].size() || index != target.size())
            throw ParseError(name, row, "index out of sequence");
        for (std::size_t c = 0; c < dim; ++c) {
            const std::string& f = fields[c + 2];
            const auto r = std::from_chars(f.data(), f.data() + f.size(), point[c]);
            if (r.ec != std::errc() || r.ptr != f.data() + f.size() || !std::isfinite(point[c]))
                throw ParseError(name, row, "column c" + std::to_string(c) + ": not a finite number '" + f + "'");
        }
        target.push_back(point);
    }
    if (row == 0) throw ParseError(name, 0, "empty file");
    if (ys.size() > xs.size()) throw ParseError(name, 0, "more Y rows than X rows");
    return Dataset(std::move(xs), std::move(ys), h, seed);
}

struct LoadedDataset {
    Dataset dataset;
    JointModel model;
    json sidecar;
};

/// Reads a dataset and its sidecar. The sidecar must describe this CSV:
/// digest, n, m and d are checked, and `expected_model`, when given, must match.
inline LoadedDataset read_dataset(const std::string& path, const JointModel* expected_model = nullptr) {
    const std::string csv = read_file(path);
    json side;
    try {
        side = json::parse(read_file(path + ".json"));
    } catch (const json::parse_error& e) {
        throw ParseError(path + ".json", 0, std::string("invalid JSON: ") + e.what());
    }
    if (!side.is_object() || side.value("format", "") != kDatasetFormat)
        throw ParseError(path + ".json", 0, std::string("not a ") + kDatasetFormat + " sidecar");
    JointModel model = model_from_json(side.at("model"), "sidecar.model");
    if (expected_model && !(*expected_model == model))
        throw InvalidInput(path + ".json: sidecar model does not match the requested model");
    const auto h = side.value("hypothesis", "H0") == "H1" ? Hypothesis::H1 : Hypothesis::H0;
    Dataset ds = parse_dataset_csv(csv, side.at("d").get<std::size_t>(), h, side.at("seed").get<std::uint64_t>(), path);
    if (side.value("digest", "") != digest_hex(csv))
        throw InvalidInput(path + ".json: sidecar digest does not match the CSV; the files belong to different datasets");
    if (ds.n() != side.at("n").get<std::size_t>() || ds.m() != side.at("m").get<std::size_t>())
        throw InvalidInput(path + ".json: sidecar sample sizes do not match the CSV");
    if (ds.xs.dim() != model.dim()) throw InvalidInput(path + ".json: model dimension does not match the CSV");
    return {std::move(ds), std::move(model), std::move(side)};
}

// ---------------------------------------------------------------------------
// Reports

inline json report_to_json(const DetectorReport& rep) {
    json j;
    j["detector"] = rep.name;
    j["statistic"] = rep.statistic;
    j["threshold"] = rep.threshold;
    j["reject_h0"] = rep.reject_h0;
    j["reject_below"] = rep.reject_below;
    j["threshold_source"] = rep.threshold_source;
    json aux = json::object();
    for (const auto& [k, v] : rep.aux) aux[k] = v;
    j["aux"] = aux;
    return j;
}

// ---------------------------------------------------------------------------
// Limit-law draws: magic, little-endian uint64 header length, JSON header,
// then count little-endian float64 values.

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
    static_assert(std::endian::native == std::endian::little, "limit-law files assume a little-endian host");
    const auto* p = reinterpret_cast<const char*>(&v);
    out.append(p, sizeof v);
}

}  // namespace detail

inline json limit_law_header(const LimitLawSample& law) {
    json j;
    j["format"] = kLimitLawFormat;
    j["version"] = kToolVersion;
    j["law"] = law.law;
    j["hypothesis"] = to_string(law.hypothesis);
    j["seed"] = law.seed;
    j["reject_below"] = law.reject_below;
    j["count"] = law.count();
    json params = json::object();
    for (const auto& [k, v] : law.params) params[k] = v;
    j["params"] = params;
    return j;
}

inline std::string limit_law_bytes(const LimitLawSample& law) {
    const std::string header = limit_law_header(law).dump();
    std::string out = kLimitLawMagic;
    detail::put_le<std::uint64_t>(out, header.size());
    out += header;
    out.reserve(out.size() + 8 * law.count());
    for (double v : law.draws) detail::put_le(out, v);
    return out;
}

inline void write_limit_law(const std::string& path, const LimitLawSample& law) { write_file(path, limit_law_bytes(law)); }

inline LimitLawSample parse_limit_law(const std::string& bytes, const std::string& name = "limit law") {
    const std::string magic = kLimitLawMagic;
    if (bytes.compare(0, magic.size(), magic) != 0) throw ParseError(name, 0, "bad magic");
    if (bytes.size() < magic.size() + 8) throw ParseError(name, 0, "truncated header length");
    std::uint64_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + magic.size(), 8);
    const std::size_t body = magic.size() + 8 + hlen;
    if (bytes.size() < body) throw ParseError(name, 0, "truncated header");
    json h;
    try {
        h = json::parse(bytes.substr(magic.size() + 8, hlen));
    } catch (const json::parse_error& e) {
        throw ParseError(name, 0, std::string("invalid header: ") + e.what());
    }
    LimitLawSample law;
    law.law = h.at("law").get<std::string>();
    law.hypothesis = h.at("hypothesis").get<std::string>() == "H1" ? Hypothesis::H1 : Hypothesis::H0;
    law.seed = h.at("seed").get<std::uint64_t>();
    law.reject_below = h.at("reject_below").get<bool>();
    for (const auto& [k, v] : h.at("params").items()) law.params[k] = v.get<double>();
    const auto count = h.at("count").get<std::size_t>();
    if (bytes.size() != body + 8 * count) throw ParseError(name, 0, "payload length does not match count");
    law.draws.resize(count);
    std::memcpy(law.draws.data(), bytes.data() + body, 8 * count);
    return law;
}

inline LimitLawSample read_limit_law(const std::string& path) { return parse_limit_law(read_file(path), path); }

}  // namespace broken_sample
