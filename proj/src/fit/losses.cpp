#include "gsp/fit/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gsp {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

std::vector<double> gaussian_taps(int window, double sigma) {
    std::vector<double> taps(window);
    int half = window / 2;
    for (int i = 0; i < window; ++i) {
        double d = i - half;
        taps[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    }
    return taps;
}

// Separable Gaussian filter with truncated-and-renormalized borders. The
// 2D window stays a product of 1D windows, so per-axis normalization is
// exact. apply_adjoint is the transpose operator needed by the gradient:
// the per-window normalizer divides before the correlation instead of
// after.
class WindowFilter {
  public:
    WindowFilter(int window, double sigma) : taps_(gaussian_taps(window, sigma)) {}

    Image apply(const Image& src) const {
        Image tmp = filter_axis(src, true, false);
        return filter_axis(tmp, false, false);
    }

    Image apply_adjoint(const Image& src) const {
        Image tmp = filter_axis(src, true, true);
        return filter_axis(tmp, false, true);
    }

  private:
    double axis_norm(int x, int n) const {
        const int half = static_cast<int>(taps_.size()) / 2;
        double norm = 0.0;
        for (int t = -half; t <= half; ++t)
            if (x + t >= 0 && x + t < n)
                norm += taps_[t + half];
        return norm;
    }

    Image filter_axis(const Image& src, bool horizontal, bool adjoint) const {
        const int w = src.width(), h = src.height(), c = src.channels();
        const int half = static_cast<int>(taps_.size()) / 2;
        const int extent = horizontal ? w : h;
        std::vector<double> norms(extent);
        for (int i = 0; i < extent; ++i)
            norms[i] = axis_norm(i, extent);
        Image out(w, h, c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                std::vector<double> acc(c, 0.0);
                for (int t = -half; t <= half; ++t) {
                    int xs = horizontal ? x + t : x;
                    int ys = horizontal ? y : y + t;
                    if (xs < 0 || xs >= w || ys < 0 || ys >= h)
                        continue;
                    double tap = taps_[t + half];
                    if (adjoint)
                        tap /= norms[horizontal ? xs : ys];
                    for (int k = 0; k < c; ++k)
                        acc[k] += tap * src.at(xs, ys, k);
                }
                double post = adjoint ? 1.0 : norms[horizontal ? x : y];
                for (int k = 0; k < c; ++k)
                    out.at(x, y, k) = static_cast<float>(acc[k] / post);
            }
        return out;
    }

    std::vector<double> taps_;
};

Image cwise_mul(const Image& a, const Image& b) {
    Image out(a.width(), a.height(), a.channels());
    for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

constexpr double kC1 = 0.01 * 0.01; // (K1 L)^2 with L = 1 (linear data)
constexpr double kC2 = 0.03 * 0.03;

} // namespace

double loss_l1(const Image& rendered, const Image& target) {
    require_same_shape(rendered, target, "loss_l1");
    double acc = 0.0;
    for (size_t i = 0; i < rendered.data().size(); ++i)
        acc += std::abs(static_cast<double>(rendered.data()[i]) - target.data()[i]);
    return acc / static_cast<double>(rendered.data().size());
}

Image loss_l1_gradient(const Image& rendered, const Image& target) {
    require_same_shape(rendered, target, "loss_l1_gradient");
    Image out(rendered.width(), rendered.height(), rendered.channels());
    double scale = 1.0 / static_cast<double>(rendered.data().size());
    for (size_t i = 0; i < out.data().size(); ++i) {
        double d = static_cast<double>(rendered.data()[i]) - target.data()[i];
        out.data()[i] = static_cast<float>(d > 0 ? scale : (d < 0 ? -scale : 0.0));
    }
    return out;
}

double loss_dssim(const Image& rendered, const Image& target, const LossConfig& cfg) {
    require_same_shape(rendered, target, "loss_dssim");
    WindowFilter filt(cfg.ssim_window, cfg.ssim_sigma);
    Image mu_x = filt.apply(rendered);
    Image mu_y = filt.apply(target);
    Image e_xx = filt.apply(cwise_mul(rendered, rendered));
    Image e_yy = filt.apply(cwise_mul(target, target));
    Image e_xy = filt.apply(cwise_mul(rendered, target));

    double ssim_sum = 0.0;
    for (size_t i = 0; i < mu_x.data().size(); ++i) {
        double mx = mu_x.data()[i], my = mu_y.data()[i];
        double sx = e_xx.data()[i] - mx * mx;
        double sy = e_yy.data()[i] - my * my;
        double sxy = e_xy.data()[i] - mx * my;
        double a1 = 2 * mx * my + kC1, a2 = 2 * sxy + kC2;
        double b1 = mx * mx + my * my + kC1, b2 = sx + sy + kC2;
        ssim_sum += (a1 * a2) / (b1 * b2);
    }
    double mean_ssim = ssim_sum / static_cast<double>(mu_x.data().size());
    return 0.5 * (1.0 - mean_ssim);
}

Image loss_dssim_gradient(const Image& rendered, const Image& target, const LossConfig& cfg) {
    require_same_shape(rendered, target, "loss_dssim_gradient");
    WindowFilter filt(cfg.ssim_window, cfg.ssim_sigma);
    Image mu_x = filt.apply(rendered);
    Image mu_y = filt.apply(target);
    Image e_xx = filt.apply(cwise_mul(rendered, rendered));
    Image e_yy = filt.apply(cwise_mul(target, target));
    Image e_xy = filt.apply(cwise_mul(rendered, target));

    const int w = rendered.width(), h = rendered.height(), c = rendered.channels();
    // Per-window coefficients of the SSIM derivative, to be pushed back
    // through the (self-adjoint) window filter:
    //   dS/dx_q = w(p,q) [ Fmu(p) + 2 x_q Fexx(p) + y_q Fexy(p) ]
    Image f_mu(w, h, c), f_exx(w, h, c), f_exy(w, h, c);
    for (size_t i = 0; i < mu_x.data().size(); ++i) {
        double mx = mu_x.data()[i], my = mu_y.data()[i];
        double sx = e_xx.data()[i] - mx * mx;
        double sy = e_yy.data()[i] - my * my;
        double sxy = e_xy.data()[i] - mx * my;
        double a1 = 2 * mx * my + kC1, a2 = 2 * sxy + kC2;
        double b1 = mx * mx + my * my + kC1, b2 = sx + sy + kC2;
        double s = (a1 * a2) / (b1 * b2);
        double dS_da1 = a2 / (b1 * b2);
        double dS_da2 = a1 / (b1 * b2);
        double dS_db1 = -s / b1;
        double dS_db2 = -s / b2;
        // Independent variables mu_x, E[x^2], E[xy]:
        //   sigma_x^2 = E[x^2] - mu_x^2, sigma_xy = E[xy] - mu_x mu_y.
        f_mu.data()[i] = static_cast<float>(2 * my * dS_da1 + 2 * mx * dS_db1 -
                                            2 * mx * dS_db2 - 2 * my * dS_da2);
        f_exx.data()[i] = static_cast<float>(dS_db2);
        f_exy.data()[i] = static_cast<float>(2 * dS_da2);
    }
    Image g_mu = filt.apply_adjoint(f_mu);
    Image g_exx = filt.apply_adjoint(f_exx);
    Image g_exy = filt.apply_adjoint(f_exy);

    Image grad(w, h, c);
    double scale = -0.5 / static_cast<double>(mu_x.data().size()); // DSSIM = (1 - mean)/2
    for (size_t i = 0; i < grad.data().size(); ++i) {
        double g = g_mu.data()[i] + 2.0 * rendered.data()[i] * g_exx.data()[i] +
                   target.data()[i] * g_exy.data()[i];
        grad.data()[i] = static_cast<float>(scale * g);
    }
    return grad;
}

Image depth_to_normal(const Image& depth_z, const Camera& camera, const Image* mask) {
    const int w = depth_z.width(), h = depth_z.height();
    Image normals(w, h, 3);
    auto covered = [&](int x, int y) {
        if (x < 0 || x >= w || y < 0 || y >= h)
            return false;
        if (mask && mask->at(x, y) <= 0.f)
            return false;
        return std::isfinite(depth_z.at(x, y)) && depth_z.at(x, y) > 0.f;
    };
    auto point = [&](int x, int y) {
        double z = depth_z.at(x, y);
        return Vec3((x + 0.5 - camera.cx) / camera.fx * z, (y + 0.5 - camera.cy) / camera.fy * z,
                    z);
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!covered(x, y))
                continue;
            // Central differences, one-sided at borders and mask edges.
            int x0 = covered(x - 1, y) ? x - 1 : x;
            int x1 = covered(x + 1, y) ? x + 1 : x;
            int y0 = covered(x, y - 1) ? y - 1 : y;
            int y1 = covered(x, y + 1) ? y + 1 : y;
            if (x0 == x1 || y0 == y1)
                continue;
            Vec3 du = point(x1, y) - point(x0, y);
            Vec3 dv = point(x, y1) - point(x, y0);
            Vec3 n = du.cross(dv);
            double len = n.norm();
            if (len < 1e-12)
                continue;
            n /= len;
            if (n.z() > 0)
                n = -n; // face the camera
            for (int c = 0; c < 3; ++c)
                normals.at(x, y, c) = static_cast<float>(n[c]);
        }
    return normals;
}

double loss_normal(const Image& normal_map, const Image& normal_ref, const Image& mask) {
    require_same_shape(normal_map, normal_ref, "loss_normal");
    const int w = normal_map.width(), h = normal_map.height();
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at(x, y) <= 0.f)
                continue;
            Vec3 n(normal_map.at(x, y, 0), normal_map.at(x, y, 1), normal_map.at(x, y, 2));
            Vec3 r(normal_ref.at(x, y, 0), normal_ref.at(x, y, 1), normal_ref.at(x, y, 2));
            double ln = n.norm(), lr = r.norm();
            if (ln < 1e-9 || lr < 1e-9)
                continue;
            acc += 1.0 - n.dot(r) / (ln * lr);
            ++count;
        }
    return count > 0 ? acc / count : 0.0;
}

double loss_total(const LossComponents& c, const LossConfig& cfg) {
    return (1.0 - cfg.lambda1) * c.l1 + cfg.lambda1 * c.dssim + cfg.lambda2 * c.normal +
           cfg.lambda3 * c.mask;
}

} // namespace gsp
