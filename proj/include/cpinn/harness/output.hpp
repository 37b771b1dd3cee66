#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cpinn/trainer/landscape.hpp"
#include "cpinn/trainer/train.hpp"

namespace cpinn {

/// %.17g, so values round-trip exactly.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'");
    return f;
}

inline constexpr const char* kHistoryHeader = "epoch,total_loss,int_loss,bc_loss,grad_norm,sigma_proxy,l2,linf,ms_per_iter";

/// History CSV; phased runs append phase,outer_k.
inline void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows, bool phased) {
    auto f = open_output(path);
    f << kHistoryHeader << (phased ? ",phase,outer_k" : "") << '\n';
    for (const auto& r : rows) {
        f << r.epoch << ',' << fmt(r.total_loss) << ',' << fmt(r.int_loss) << ',' << fmt(r.bc_loss) << ','
          << fmt(r.grad_norm) << ',' << fmt(r.sigma_proxy) << ',' << fmt(r.l2) << ',' << fmt(r.linf) << ','
          << fmt(r.ms_per_iter);
        if (phased) f << ',' << r.phase << ',' << r.outer_k;
        f << '\n';
    }
}

/// x1..xd,exact,predicted,abs_error; exact and abs_error blank without a reference.
inline void write_field_csv(const std::filesystem::path& path, const PointSet& pts, const Vec& predicted,
                            const Vec* exact) {
    auto f = open_output(path);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) f << 'x' << i + 1 << ',';
    f << "exact,predicted,abs_error\n";
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
        for (Eigen::Index i = 0; i < pts.rows(); ++i) f << fmt(pts(i, j)) << ',';
        if (exact) {
            f << fmt((*exact)[j]) << ',' << fmt(predicted[j]) << ',' << fmt(std::abs(predicted[j] - (*exact)[j]));
        } else {
            f << ',' << fmt(predicted[j]) << ',';
        }
        f << '\n';
    }
}

inline void write_landscape_csv(const std::filesystem::path& path, const LandscapeProbe& p) {
    auto f = open_output(path);
    f << "a,b,loss\n";
    for (Eigen::Index i = 0; i < p.offsets.size(); ++i) {
        for (Eigen::Index j = 0; j < p.offsets.size(); ++j) {
            f << fmt(p.offsets[i]) << ',' << fmt(p.offsets[j]) << ',' << fmt(p.surface(i, j)) << '\n';
        }
    }
}

/// x1,x2,y1,y2 for a source grid and its image.
inline void write_transport_grid_csv(const std::filesystem::path& path, const PointSet& x, const Mat& y) {
    auto f = open_output(path);
    f << "x1,x2,y1,y2\n";
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        f << fmt(x(0, j)) << ',' << fmt(x(1, j)) << ',' << fmt(y(0, j)) << ',' << fmt(y(1, j)) << '\n';
    }
}

/// x1,x2,fd,predicted,abs_diff on the finite-difference nodes.
inline void write_fd_csv(const std::filesystem::path& path, const PointSet& nodes, const Vec& fd, const Vec* predicted) {
    auto f = open_output(path);
    f << "x1,x2,fd,predicted,abs_diff\n";
    for (Eigen::Index j = 0; j < nodes.cols(); ++j) {
        f << fmt(nodes(0, j)) << ',' << fmt(nodes(1, j)) << ',' << fmt(fd[j]) << ',';
        if (predicted) f << fmt((*predicted)[j]) << ',' << fmt(std::abs((*predicted)[j] - fd[j]));
        else f << ',';
        f << '\n';
    }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto f = open_output(path);
    f << j.dump(2) << '\n';
}

}  // namespace cpinn
