#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmvs/errors.hpp"

namespace gmmvs {

/// Ordered set of 0-based time-point indices.
class TimepointSet {
public:
    TimepointSet() = default;

    /// Sorts and validates; duplicates are rejected.
    explicit TimepointSet(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
        std::sort(indices_.begin(), indices_.end());
        if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
            throw Error(ErrorKind::InvalidArgument, "duplicate time-point index");
    }

    static TimepointSet range(std::size_t n) {
        std::vector<std::size_t> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = i;
        return TimepointSet(std::move(v));
    }

    static TimepointSet interval(std::size_t first, std::size_t last) {
        std::vector<std::size_t> v;
        for (std::size_t i = first; i <= last; ++i) v.push_back(i);
        return TimepointSet(std::move(v));
    }

    const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    std::size_t size() const noexcept { return indices_.size(); }
    bool empty() const noexcept { return indices_.empty(); }
    std::size_t operator[](std::size_t i) const { return indices_[i]; }
    auto begin() const noexcept { return indices_.begin(); }
    auto end() const noexcept { return indices_.end(); }
    std::size_t front() const { return indices_.front(); }
    std::size_t back() const { return indices_.back(); }

    bool contains(std::size_t idx) const {
        return std::binary_search(indices_.begin(), indices_.end(), idx);
    }

    TimepointSet without(std::size_t idx) const {
        TimepointSet out;
        out.indices_.reserve(indices_.size());
        for (auto i : indices_)
            if (i != idx) out.indices_.push_back(i);
        return out;
    }

    TimepointSet with(std::size_t idx) const {
        if (contains(idx)) return *this;
        auto v = indices_;
        v.push_back(idx);
        return TimepointSet(std::move(v));
    }

    bool is_contiguous() const noexcept {
        return indices_.empty() || indices_.back() - indices_.front() + 1 == indices_.size();
    }

    /// 1-based labels for human-facing output.
    std::vector<std::size_t> one_based() const {
        std::vector<std::size_t> v(indices_);
        for (auto& i : v) ++i;
        return v;
    }

    friend bool operator==(const TimepointSet&, const TimepointSet&) = default;
    friend auto operator<=>(const TimepointSet& a, const TimepointSet& b) { return a.indices_ <=> b.indices_; }

private:
    std::vector<std::size_t> indices_;
};

/// S subjects observed at a common grid of N time points. Each time point
/// carries its own S x p_n covariate block (p_n may be zero). Immutable.
class LongitudinalDataset {
public:
    LongitudinalDataset() = default;

    LongitudinalDataset(std::vector<std::string> subject_ids, std::vector<double> times, Eigen::MatrixXd outcomes,
                        std::vector<Eigen::MatrixXd> covariates)
        : subject_ids_(std::move(subject_ids)),
          times_(std::move(times)),
          outcomes_(std::move(outcomes)),
          covariates_(std::move(covariates)) {
        const auto S = static_cast<Eigen::Index>(subject_ids_.size());
        const auto N = static_cast<Eigen::Index>(times_.size());
        if (outcomes_.rows() != S || outcomes_.cols() != N)
            throw Error(ErrorKind::ShapeMismatch, "outcomes must be S x N");
        if (covariates_.empty()) covariates_.assign(static_cast<std::size_t>(N), Eigen::MatrixXd(S, 0));
        if (static_cast<Eigen::Index>(covariates_.size()) != N)
            throw Error(ErrorKind::ShapeMismatch, "one covariate block per time point required");
        for (const auto& c : covariates_) {
            if (c.rows() != S) throw Error(ErrorKind::ShapeMismatch, "covariate block must have S rows");
            if (!c.allFinite()) throw Error(ErrorKind::NonNumericValue, "non-finite covariate value");
        }
        if (!outcomes_.allFinite()) throw Error(ErrorKind::NonNumericValue, "non-finite outcome value");
        {
            auto ids = subject_ids_;
            std::sort(ids.begin(), ids.end());
            if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
                throw Error(ErrorKind::DuplicateCell, "subject ids must be unique");
        }
        designs_.reserve(covariates_.size());
        outcome_variance_.resize(static_cast<std::size_t>(N));
        for (Eigen::Index n = 0; n < N; ++n) {
            const auto& c = covariates_[static_cast<std::size_t>(n)];
            Eigen::MatrixXd d(S, c.cols() + 1);
            d.col(0).setOnes();
            if (c.cols() > 0) d.rightCols(c.cols()) = c;
            designs_.push_back(std::move(d));
            double var = 0.0;
            if (S > 0) {
                const double mean = outcomes_.col(n).mean();
                var = (outcomes_.col(n).array() - mean).square().mean();
            }
            outcome_variance_[static_cast<std::size_t>(n)] = var;
        }
    }

    std::size_t n_subjects() const noexcept { return subject_ids_.size(); }
    std::size_t n_timepoints() const noexcept { return times_.size(); }

    const std::vector<std::string>& subject_ids() const noexcept { return subject_ids_; }
    /// Original time values; indices 0..N-1 rank them ascending.
    const std::vector<double>& times() const noexcept { return times_; }
    const Eigen::MatrixXd& outcomes() const noexcept { return outcomes_; }
    auto outcome(std::size_t n) const { return outcomes_.col(static_cast<Eigen::Index>(n)); }
    const Eigen::MatrixXd& covariates(std::size_t n) const { return covariates_.at(n); }
    std::size_t covariate_count(std::size_t n) const { return static_cast<std::size_t>(covariates_.at(n).cols()); }
    std::size_t max_covariate_count() const {
        std::size_t p = 0;
        for (const auto& c : covariates_) p = std::max(p, static_cast<std::size_t>(c.cols()));
        return p;
    }

    /// S x (p_n + 1) regression design [1, x_sn].
    const Eigen::MatrixXd& design(std::size_t n) const { return designs_.at(n); }
    /// Population variance of the outcome at time point n.
    double outcome_variance(std::size_t n) const { return outcome_variance_.at(n); }

    TimepointSet all_timepoints() const { return TimepointSet::range(n_timepoints()); }

    /// Copy with every covariate block dropped (p_n = 0 everywhere).
    LongitudinalDataset without_covariates() const {
        return LongitudinalDataset(subject_ids_, times_, outcomes_, {});
    }

    friend bool operator==(const LongitudinalDataset& a, const LongitudinalDataset& b) {
        if (a.subject_ids_ != b.subject_ids_ || a.times_ != b.times_) return false;
        if (a.outcomes_.rows() != b.outcomes_.rows() || a.outcomes_.cols() != b.outcomes_.cols()) return false;
        if (a.outcomes_ != b.outcomes_) return false;
        if (a.covariates_.size() != b.covariates_.size()) return false;
        for (std::size_t n = 0; n < a.covariates_.size(); ++n) {
            const auto& x = a.covariates_[n];
            const auto& y = b.covariates_[n];
            if (x.rows() != y.rows() || x.cols() != y.cols() || x != y) return false;
        }
        return true;
    }

private:
    std::vector<std::string> subject_ids_;
    std::vector<double> times_;
    Eigen::MatrixXd outcomes_;
    std::vector<Eigen::MatrixXd> covariates_;
    std::vector<Eigen::MatrixXd> designs_;
    std::vector<double> outcome_variance_;
};

/// Column names for long-format CSV ingestion. An empty covariate list means
/// "every column named x<digits>, in header order".
struct CsvSchema {
    std::string subject = "subject";
    std::string time = "time";
    std::string y = "y";
    std::vector<std::string> covariates;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& raw) {
    const auto s = trim(raw);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw Error(ErrorKind::NonNumericValue, "cannot parse '" + s + "' as a finite number");
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline bool is_default_covariate_name(const std::string& name) {
    return name.size() >= 2 && name[0] == 'x' &&
           std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

/// Reads long-format CSV (one row per subject x time). Subjects keep their
/// order of first appearance; times are sorted ascending.
inline LongitudinalDataset parse_long_csv(std::istream& in, const CsvSchema& schema = {}) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::IoFailure, "empty input: header row required");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    auto header = detail::split_csv_line(line);
    for (auto& h : header) h = detail::trim(h);

    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error(ErrorKind::InvalidArgument, "missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_subject = column(schema.subject);
    const std::size_t c_time = column(schema.time);
    const std::size_t c_y = column(schema.y);
    std::vector<std::size_t> c_cov;
    if (schema.covariates.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (detail::is_default_covariate_name(header[i])) c_cov.push_back(i);
    } else {
        for (const auto& name : schema.covariates) c_cov.push_back(column(name));
    }
    const std::size_t p = c_cov.size();

    struct Row {
        std::size_t subject;
        double time;
        double y;
        std::vector<std::optional<double>> x;
    };
    std::vector<Row> rows;
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::size_t> id_index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty() || line == "\r") continue;
        auto f = detail::split_csv_line(line);
        if (f.size() < header.size())
            throw Error(ErrorKind::MissingCell, "line " + std::to_string(line_no) + " has too few fields");
        const auto id = detail::trim(f[c_subject]);
        auto [it, inserted] = id_index.try_emplace(id, ids.size());
        if (inserted) ids.push_back(id);
        Row r;
        r.subject = it->second;
        const auto t = detail::parse_double(f[c_time]);
        const auto y = detail::parse_double(f[c_y]);
        if (!t || !y)
            throw Error(ErrorKind::MissingCell, "line " + std::to_string(line_no) + " lacks time or outcome");
        r.time = *t;
        r.y = *y;
        r.x.reserve(p);
        for (auto c : c_cov) r.x.push_back(detail::parse_double(f[c]));
        rows.push_back(std::move(r));
    }

    std::vector<double> times;
    for (const auto& r : rows) times.push_back(r.time);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    const std::size_t S = ids.size();
    const std::size_t N = times.size();

    Eigen::MatrixXd y(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(N));
    std::vector<std::vector<std::optional<double>>> x(S * N);
    std::vector<char> seen(S * N, 0);
    for (auto& r : rows) {
        const auto n = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), r.time) - times.begin());
        const std::size_t cell = r.subject * N + n;
        if (seen[cell])
            throw Error(ErrorKind::DuplicateCell,
                        "subject '" + ids[r.subject] + "' has two rows at time " + detail::format_double(r.time));
        seen[cell] = 1;
        y(static_cast<Eigen::Index>(r.subject), static_cast<Eigen::Index>(n)) = r.y;
        x[cell] = std::move(r.x);
    }
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t n = 0; n < N; ++n)
            if (!seen[s * N + n])
                throw Error(ErrorKind::MissingCell,
                            "subject '" + ids[s] + "' has no row at time " + detail::format_double(times[n]));

    // A covariate column blank for every subject at a time point is absent
    // there; blank for only some subjects is a missing cell.
    std::vector<Eigen::MatrixXd> cov;
    cov.reserve(N);
    for (std::size_t n = 0; n < N; ++n) {
        std::vector<std::size_t> present;
        for (std::size_t j = 0; j < p; ++j) {
            std::size_t blanks = 0;
            for (std::size_t s = 0; s < S; ++s) blanks += x[s * N + n][j].has_value() ? 0 : 1;
            if (blanks == 0) {
                present.push_back(j);
            } else if (blanks != S) {
                throw Error(ErrorKind::MissingCell, "covariate '" + header[c_cov[j]] + "' is blank for some subjects at time " +
                                                        detail::format_double(times[n]));
            }
        }
        Eigen::MatrixXd block(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(present.size()));
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t j = 0; j < present.size(); ++j)
                block(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = *x[s * N + n][present[j]];
        cov.push_back(std::move(block));
    }
    return LongitudinalDataset(std::move(ids), std::move(times), std::move(y), std::move(cov));
}

inline LongitudinalDataset parse_long_csv(const std::filesystem::path& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    return parse_long_csv(in, schema);
}

/// Emits subject,time,y,x1..xp with shortest round-trip number formatting.
inline void write_long_csv(const LongitudinalDataset& d, std::ostream& out) {
    const std::size_t p = d.max_covariate_count();
    out << "subject,time,y";
    for (std::size_t j = 1; j <= p; ++j) out << ",x" << j;
    out << '\n';
    for (std::size_t s = 0; s < d.n_subjects(); ++s) {
        for (std::size_t n = 0; n < d.n_timepoints(); ++n) {
            const auto si = static_cast<Eigen::Index>(s);
            out << detail::quote_csv(d.subject_ids()[s]) << ',' << detail::format_double(d.times()[n]) << ','
                << detail::format_double(d.outcomes()(si, static_cast<Eigen::Index>(n)));
            const auto& c = d.covariates(n);
            for (std::size_t j = 0; j < p; ++j) {
                out << ',';
                if (static_cast<Eigen::Index>(j) < c.cols()) out << detail::format_double(c(si, static_cast<Eigen::Index>(j)));
            }
            out << '\n';
        }
    }
    if (!out) throw Error(ErrorKind::IoFailure, "write failed");
}

inline void write_long_csv(const LongitudinalDataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
    write_long_csv(d, out);
    out.flush();
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace gmmvs
