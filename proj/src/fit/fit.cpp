#include "gsp/fit/fit.hpp"

#include "gsp/core/parallel.hpp"

#include <cmath>
#include <sstream>

namespace gsp {

namespace {

double smoothstep01(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

// d/dt of smoothstep((t - 0.3)/0.4); zero outside the blend zone.
double branch_blend_derivative(double t) {
    double x = (t - 0.3) / 0.4;
    if (x <= 0.0 || x >= 1.0)
        return 0.0;
    return 6.0 * x * (1.0 - x) / 0.4;
}

double fresnel_schlick_dEta(double cos_theta, double eta) {
    // F = F0 + (1 - F0) m^5, F0 = ((1-eta)/(1+eta))^2.
    double m = 1.0 - std::clamp(cos_theta, 0.0, 1.0);
    double m5 = m * m * m * m * m;
    double dF0 = -4.0 * (1.0 - eta) / std::pow(1.0 + eta, 3.0);
    return dF0 * (1.0 - m5);
}

// Traveling-direction refraction with derivatives. m is the surface normal
// oriented against the travel direction (m . D < 0), r the eta ratio.
struct RefractJac {
    bool valid = false;
    Vec3 dir = Vec3::Zero();
    Mat3 ddir_dD = Mat3::Zero();
    Vec3 ddir_dr = Vec3::Zero();
};

RefractJac refract_travel_jac(const Vec3& D, const Vec3& m, double r) {
    RefractJac out;
    double cos_i = -D.dot(m);
    double sin2_t = r * r * std::max(0.0, 1.0 - cos_i * cos_i);
    if (sin2_t >= 1.0)
        return out;
    double cos_t = std::sqrt(1.0 - sin2_t);
    out.valid = true;
    out.dir = r * D + (r * cos_i - cos_t) * m;
    out.ddir_dD = r * Mat3::Identity() + (r * r * cos_i / cos_t - r) * (m * m.transpose());
    out.ddir_dr = D + (cos_i + r * (1.0 - cos_i * cos_i) / cos_t) * m;
    return out;
}

// Trilinear weights plus their gradients with respect to the query point.
struct CellWeightsGrad {
    std::array<int, 8> probe{};
    std::array<double, 8> w{};
    std::array<Vec3, 8> dw_do{};
};

CellWeightsGrad trilinear_weights_grad(const Vec3& o, const ProbeGrid& grid) {
    CellWeightsGrad cw;
    Vec3 ext = grid.bbox.extent();
    std::array<int, 3> cell{};
    Vec3 frac = Vec3::Zero(), dfrac = Vec3::Zero();
    for (int a = 0; a < 3; ++a) {
        int n = grid.dims[a];
        if (n <= 1 || ext[a] <= 0.0) {
            cell[a] = 0;
            continue;
        }
        double s = (o[a] - grid.bbox.lo[a]) / ext[a] * (n - 1);
        int c = std::clamp(static_cast<int>(std::floor(s)), 0, n - 2);
        cell[a] = c;
        double f = s - c;
        if (f <= 0.0 || f >= 1.0) {
            frac[a] = std::clamp(f, 0.0, 1.0); // clamped: zero derivative
        } else {
            frac[a] = f;
            dfrac[a] = (n - 1) / ext[a];
        }
    }
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx, ++k) {
                int ix = std::min(cell[0] + dx, grid.dims[0] - 1);
                int iy = std::min(cell[1] + dy, grid.dims[1] - 1);
                int iz = std::min(cell[2] + dz, grid.dims[2] - 1);
                cw.probe[k] = ix + grid.dims[0] * (iy + grid.dims[1] * iz);
                double fx = dx ? frac[0] : 1.0 - frac[0];
                double fy = dy ? frac[1] : 1.0 - frac[1];
                double fz = dz ? frac[2] : 1.0 - frac[2];
                cw.w[k] = fx * fy * fz;
                Vec3 g(dx ? dfrac[0] : -dfrac[0], dy ? dfrac[1] : -dfrac[1],
                       dz ? dfrac[2] : -dfrac[2]);
                cw.dw_do[k] = Vec3(g.x() * fy * fz, fx * g.y() * fz, fx * fy * g.z());
            }
    return cw;
}

// Color of a converged probe query together with its Jacobian with respect
// to the ray origin and direction. The estimated distance is differentiated
// implicitly through the fixed point of the update map.
struct QueryJacobian {
    bool valid = false;
    Vec3 color = Vec3::Zero();
    Mat3 dcolor_do = Mat3::Zero(); // row c = gradient of color[c] w.r.t. o
    Mat3 dcolor_dd = Mat3::Zero();
};

QueryJacobian query_color_jacobian(const ProbeGrid& grid, const Ray& ray,
                                   const IterQueryOptions& opts) {
    QueryJacobian out;
    QueryResult base = iter_query(grid, ray, opts);
    if (base.miss)
        return out;
    out.color = base.color;

    CellWeightsGrad cw = trilinear_weights_grad(ray.origin, grid);
    struct Sel {
        const Probe* probe;
        double w;
        Vec3 dw;
    };
    std::array<Sel, 8> sel{};
    int n_sel = 0;
    double wsum = 0.0;
    Vec3 dwsum = Vec3::Zero();
    for (int k = 0; k < 8; ++k) {
        if (cw.w[k] == 0.0)
            continue;
        const Probe& p = grid.probes[cw.probe[k]];
        if (p.max_finite_depth <= 0.f)
            continue;
        sel[n_sel++] = {&p, cw.w[k], cw.dw_do[k]};
        wsum += cw.w[k];
        dwsum += cw.dw_do[k];
    }
    if (n_sel == 0)
        return out;
    for (int k = 0; k < n_sel; ++k) {
        // Renormalized weights: d(w/W) = dw/W - w dW/W^2.
        Vec3 dw = sel[k].dw / wsum - sel[k].w * dwsum / (wsum * wsum);
        sel[k].w /= wsum;
        sel[k].dw = dw;
    }

    const Vec3 o = ray.origin, d = ray.dir;
    const double t_hat = base.t_hat;

    // Reconstruct the converged per-probe state and assemble the implicit
    // derivative of the fixed point t_hat.
    double dg_dt = 0.0;
    Vec3 dg_do = Vec3::Zero(), dg_dd = Vec3::Zero();
    struct ProbeState {
        Vec3 dir;
        Mat3 proj_over_r; // (I - dir dir^T)/r
        ProbeSampleGrad samp;
    };
    std::array<ProbeState, 8> st{};
    for (int k = 0; k < n_sel; ++k) {
        Vec3 h = o + t_hat * d - sel[k].probe->position;
        double r = h.norm();
        if (r < 1e-12)
            return out;
        Vec3 dir = h / r;
        Mat3 proj = (Mat3::Identity() - dir * dir.transpose()) / r;
        ProbeSampleGrad samp = sample_with_gradient(*sel[k].probe, dir);
        st[k] = {dir, proj, samp};

        double theta = samp.depth;
        Vec3 grad_theta = samp.ddepth_ddir;
        double dd = d.dot(dir);
        Vec3 proj_d = proj * d;
        double term = theta * dd + (sel[k].probe->position - o).dot(d);

        dg_dt += sel[k].w * (grad_theta.dot(proj_d) * dd + theta * d.dot(proj_d));
        dg_do += term * sel[k].dw +
                 sel[k].w * (proj * grad_theta * dd + theta * proj_d - d);
        dg_dd += sel[k].w * (t_hat * (proj * grad_theta) * dd +
                             theta * (dir + t_hat * proj_d) + (sel[k].probe->position - o));
    }
    double denom = 1.0 - dg_dt;
    if (std::abs(denom) < 1e-9)
        return out; // tangent surface; caller screens these
    Vec3 dt_do = dg_do / denom;
    Vec3 dt_dd = dg_dd / denom;

    for (int k = 0; k < n_sel; ++k) {
        const Vec3 proj_d = st[k].proj_over_r * d;
        // d(dir_k)/d(o) = P + (P d) (dt/do)^T ; d(dir_k)/d(d) = t P + (P d)(dt/dd)^T
        Mat3 ddir_do = st[k].proj_over_r + proj_d * dt_do.transpose();
        Mat3 ddir_dd = t_hat * st[k].proj_over_r + proj_d * dt_dd.transpose();
        out.dcolor_do += sel[k].w * st[k].samp.dcolor_ddir * ddir_do;
        out.dcolor_dd += sel[k].w * st[k].samp.dcolor_ddir * ddir_dd;
        for (int c = 0; c < 3; ++c)
            out.dcolor_do.row(c) += st[k].samp.color[c] * sel[k].dw.transpose();
    }
    out.valid = true;
    return out;
}

// d(refraction radiance)/d(eta) through the full geometric chain: entry
// Snell, proxy-mesh march over the recorded triangles, exit Snell, and the
// converged probe query.
bool refraction_eta_derivative(const PixelInputs& in, const Ray& view_ray,
                               const PixelShadeDetail& detail, const ProbeGrid& grid,
                               const BvhIndex& bvh, const ShadeOptions& opts, Vec3& dL_dEta) {
    if (!detail.path.valid)
        return false;
    double eta = std::clamp(in.ior, 1.0, 3.0);
    const Vec3 n = detail.normal; // camera-facing unit normal
    const Vec3 D0 = view_ray.dir;

    RefractJac entry = refract_travel_jac(D0, n, 1.0 / eta);
    if (!entry.valid)
        return false;
    Vec3 D = entry.dir;
    Vec3 dD = entry.ddir_dr * (-1.0 / (eta * eta)); // d(travel)/d(eta)

    const double eps = opts.mesh_offset_rel * bvh.bbox_diagonal();
    Vec3 p = in.hit_point;
    Vec3 dp = Vec3::Zero();

    const TriangleMesh& mesh = bvh.mesh();
    auto plane_step = [&](int triangle) -> bool {
        const auto& tri = mesh.triangles[triangle];
        const Vec3 q = mesh.vertices[tri[0]];
        const Vec3 nf = mesh.face_normals[triangle];
        Vec3 o1 = p + eps * D;
        Vec3 do1 = dp + eps * dD;
        double dn = D.dot(nf);
        if (std::abs(dn) < 1e-12)
            return false;
        double num = (q - o1).dot(nf);
        double t = num / dn;
        double dnum = -do1.dot(nf);
        double ddn = dD.dot(nf);
        double dt = (dnum * dn - num * ddn) / (dn * dn);
        Vec3 new_p = o1 + t * D;
        dp = do1 + dt * D + t * dD;
        p = new_p;
        return true;
    };

    if (detail.path.tir_count == 1) {
        if (detail.path.bounce_triangle < 0 || !plane_step(detail.path.bounce_triangle))
            return false;
        const Vec3 nf = mesh.face_normals[detail.path.bounce_triangle];
        // Travel reflection about the face: D' = D - 2 (D.nf) nf.
        Vec3 Dn = D - 2.0 * D.dot(nf) * nf;
        dD = dD - 2.0 * (dD.dot(nf)) * nf;
        D = Dn;
    }
    if (detail.path.exit_triangle < 0 || !plane_step(detail.path.exit_triangle))
        return false;

    const Vec3 nf_exit = mesh.face_normals[detail.path.exit_triangle];
    RefractJac exit = refract_travel_jac(D, Vec3(-nf_exit), eta);
    if (!exit.valid)
        return false;
    Vec3 D2 = exit.dir;
    Vec3 dD2 = exit.ddir_dD * dD + exit.ddir_dr; // d(eta ratio)/d(eta) = 1

    IterQueryOptions q = opts.query;
    q.background = opts.background;
    QueryJacobian jac = query_color_jacobian(grid, Ray{p, D2.normalized()}, q);
    if (!jac.valid)
        return false;
    dL_dEta = jac.dcolor_do * dp + jac.dcolor_dd * dD2;
    return true;
}

} // namespace

PixelInputs blend_pixel_inputs(const std::vector<GaussianPrimitive>& object,
                               const std::vector<std::pair<int, double>>& contributions,
                               const Camera& camera, int x, int y, double hit_tau) {
    PixelInputs in;
    double alpha = 0.0;
    Vec3 normal = Vec3::Zero(), base = Vec3::Zero();
    double t = 0.0, ior = 0.0, metal = 0.0;
    for (const auto& [src, w] : contributions) {
        const TransparentAttributes& a = object[src].attrs;
        alpha += w;
        normal += w * a.normal;
        base += w * a.base_color;
        t += w * a.transparency;
        ior += w * a.ior;
        metal += w * a.metallic;
    }
    in.normal_blend = normal;
    if (alpha > 0.0) {
        in.transparency = t / alpha;
        in.ior = ior / alpha;
        in.metallic = metal / alpha;
        in.base_color = base / alpha;
    }
    in.hit_point = camera.ray_through(x + 0.5, y + 0.5).at(hit_tau);
    return in;
}

PixelAttributeJacobian pixel_attribute_jacobian(const PixelInputs& in, const Ray& view_ray,
                                                const ProbeGrid& grid, const BvhIndex& bvh,
                                                const ShadeOptions& opts) {
    PixelAttributeJacobian out;
    PixelShadeDetail detail;
    shade_pixel(in, view_ray, grid, bvh, opts, nullptr, nullptr, nullptr, &detail);
    if (detail.degenerate_normal)
        return out;
    const double s = detail.blend_s;
    const double eta = std::clamp(in.ior, 1.0, 3.0);

    // Branch blend: dL/dt = s'(t) (transparent - opaque).
    out.d_dtransparency = branch_blend_derivative(in.transparency) *
                          (detail.transparent - detail.opaque);

    // Base color: refraction tint in the transparent branch, Lambertian
    // modulation in the opaque one.
    if (s > 0.0 && detail.path.valid && opts.absorption) {
        Vec3 diag = (1.0 - detail.fresnel) * detail.l_refr;
        for (int c = 0; c < 3; ++c)
            out.d_dbase(c, c) += s * diag[c];
    }
    if (s < 1.0) {
        for (int c = 0; c < 3; ++c)
            out.d_dbase(c, c) += (1.0 - s) * (1.0 - in.metallic) * detail.ambient[c];
    }

    // IOR: Fresnel weight plus the geometric refraction chain.
    if (s > 0.0 && eta > 1.0 + 1e-12 && eta < 3.0 - 1e-12) {
        double dF = fresnel_schlick_dEta(detail.cos_theta, eta);
        if (detail.path.valid) {
            Vec3 tinted = detail.tint.cwiseProduct(detail.l_refr);
            out.d_dior += s * dF * (detail.l_refl - tinted);
            Vec3 dL = Vec3::Zero();
            if (refraction_eta_derivative(in, view_ray, detail, grid, bvh, opts, dL))
                out.d_dior += s * (1.0 - detail.fresnel) * detail.tint.cwiseProduct(dL);
        }
        // Reflective-only fallback has no eta dependence.
    }
    out.valid = true;
    return out;
}

FitRender fit_forward(const std::vector<GaussianPrimitive>& object, const FitView& view,
                      const ProbeGrid& grid, const BvhIndex& bvh, const FitOptions& opts) {
    FitRender fr;
    RenderOptions ropts;
    ropts.background = opts.shade.background;
    fr.pass = rasterize(object, view.camera, ropts);
    const Image* env = view.environment.width() > 0 ? &view.environment : nullptr;
    ShadeResult shaded = shade_deferred(fr.pass.gbuffer, grid, bvh, view.camera, opts.shade, env);
    fr.shaded = shaded.color;

    const int w = view.camera.width, h = view.camera.height;
    fr.coverage = Image(w, h, 1);
    fr.depth_z = Image(w, h, 1);
    fr.normal_cam = Image(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool cov = fr.pass.gbuffer.covered(x, y);
            fr.coverage.at(x, y) = cov ? 1.f : 0.f;
            if (!cov)
                continue;
            Ray ray = view.camera.ray_through(x + 0.5, y + 0.5);
            double dz = (view.camera.rotation * ray.dir).z();
            fr.depth_z.at(x, y) = static_cast<float>(fr.pass.gbuffer.hit_tau.at(x, y) * dz);
            Vec3 n(fr.pass.gbuffer.normal_raw.at(x, y, 0), fr.pass.gbuffer.normal_raw.at(x, y, 1),
                   fr.pass.gbuffer.normal_raw.at(x, y, 2));
            Vec3 nc = view.camera.rotation * n;
            for (int c = 0; c < 3; ++c)
                fr.normal_cam.at(x, y, c) = static_cast<float>(nc[c]);
        }

    fr.components.l1 = loss_l1(fr.shaded, view.target);
    fr.components.dssim = loss_dssim(fr.shaded, view.target, opts.loss);
    Image nd = depth_to_normal(fr.depth_z, view.camera, &fr.coverage);
    fr.components.normal = loss_normal(fr.normal_cam, nd, fr.coverage);
    fr.components.mask = loss_l1(fr.pass.gbuffer.alpha, view.silhouette);
    fr.total = loss_total(fr.components, opts.loss);
    return fr;
}

AttributeGradients fit_gradients(const std::vector<GaussianPrimitive>& object, const FitView& view,
                                 const ProbeGrid& grid, const BvhIndex& bvh,
                                 const FitOptions& opts) {
    const int n = static_cast<int>(object.size());
    const int w = view.camera.width, h = view.camera.height;
    AttributeGradients g;
    g.normal.assign(n, Vec3::Zero());
    g.transparency.assign(n, 0.0);
    g.ior.assign(n, 0.0);
    g.base_color.assign(n, Vec3::Zero());

    RenderOptions ropts;
    ropts.background = opts.shade.background;
    PixelContributions contribs;
    RenderResult pass = rasterize_collect(object, view.camera, ropts, contribs);
    const Image* env = view.environment.width() > 0 ? &view.environment : nullptr;
    ShadeResult shaded = shade_deferred(pass.gbuffer, grid, bvh, view.camera, opts.shade, env);

    // d(loss)/d(image) from the two photometric terms.
    Image dl_l1 = loss_l1_gradient(shaded.color, view.target);
    Image dl_ssim = loss_dssim_gradient(shaded.color, view.target, opts.loss);
    const double w_l1 = 1.0 - opts.loss.lambda1;
    const double w_ssim = opts.loss.lambda1;

    // Normal regularizer reference and pixel count.
    Image coverage(w, h, 1);
    Image depth_z(w, h, 1);
    int covered_count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool cov = pass.gbuffer.covered(x, y);
            coverage.at(x, y) = cov ? 1.f : 0.f;
            if (!cov)
                continue;
            ++covered_count;
            Ray ray = view.camera.ray_through(x + 0.5, y + 0.5);
            double dz = (view.camera.rotation * ray.dir).z();
            depth_z.at(x, y) = static_cast<float>(pass.gbuffer.hit_tau.at(x, y) * dz);
        }
    Image nd = depth_to_normal(depth_z, view.camera, &coverage);

    struct ThreadGrad {
        std::vector<Vec3> normal, base;
        std::vector<double> transparency, ior, weight;
    };
    int nthreads = worker_count();
    std::vector<ThreadGrad> locals(nthreads);
    for (auto& l : locals) {
        l.normal.assign(n, Vec3::Zero());
        l.base.assign(n, Vec3::Zero());
        l.transparency.assign(n, 0.0);
        l.ior.assign(n, 0.0);
        l.weight.assign(n, 0.0);
    }

    parallel_chunks(0, h, [&](int64_t y_lo, int64_t y_hi, int thread) {
        ThreadGrad& tg = locals[thread];
        for (int y = static_cast<int>(y_lo); y < y_hi; ++y) {
            for (int x = 0; x < w; ++x) {
                if (coverage.at(x, y) <= 0.f)
                    continue;
                const auto& contrib = contribs[static_cast<size_t>(y) * w + x];
                if (contrib.empty())
                    continue;
                double alpha = pass.gbuffer.alpha.at(x, y);
                Ray ray = view.camera.ray_through(x + 0.5, y + 0.5);
                PixelInputs in = blend_pixel_inputs(object, contrib, view.camera, x, y,
                                                    pass.gbuffer.hit_tau.at(x, y));
                for (const auto& [src, wk] : contrib)
                    tg.weight[src] += wk / alpha;

                Vec3 gI(w_l1 * dl_l1.at(x, y, 0) + w_ssim * dl_ssim.at(x, y, 0),
                        w_l1 * dl_l1.at(x, y, 1) + w_ssim * dl_ssim.at(x, y, 1),
                        w_l1 * dl_l1.at(x, y, 2) + w_ssim * dl_ssim.at(x, y, 2));

                if (opts.optimize.transparency || opts.optimize.ior || opts.optimize.base_color) {
                    PixelAttributeJacobian jac =
                        pixel_attribute_jacobian(in, ray, grid, bvh, opts.shade);
                    if (jac.valid) {
                        // I = alpha * L + (1 - alpha) env; d/dattr = alpha dL.
                        if (opts.optimize.transparency) {
                            double gp = alpha * jac.d_dtransparency.dot(gI);
                            for (const auto& [src, wk] : contrib)
                                tg.transparency[src] += gp * wk / alpha;
                        }
                        if (opts.optimize.ior) {
                            double gp = alpha * jac.d_dior.dot(gI);
                            for (const auto& [src, wk] : contrib)
                                tg.ior[src] += gp * wk / alpha;
                        }
                        if (opts.optimize.base_color) {
                            Vec3 gp = alpha * (jac.d_dbase.transpose() * gI);
                            for (const auto& [src, wk] : contrib)
                                tg.base[src] += gp * wk / alpha;
                        }
                    }
                }

                if (opts.optimize.normal) {
                    // Central differences of the shaded pixel on the raw
                    // blended normal, plus the analytic normal-loss term.
                    Vec3 gN = Vec3::Zero();
                    const double step = opts.normal_fd_step;
                    for (int c = 0; c < 3; ++c) {
                        PixelInputs hi = in, lo = in;
                        hi.normal_blend[c] += step;
                        lo.normal_blend[c] -= step;
                        Vec3 i_hi = shade_pixel(hi, ray, grid, bvh, opts.shade);
                        Vec3 i_lo = shade_pixel(lo, ray, grid, bvh, opts.shade);
                        gN[c] = alpha * ((i_hi - i_lo) / (2.0 * step)).dot(gI);
                    }
                    // Normal regularizer: mean over covered pixels of
                    // 1 - dot(normalize(R n), n_ref).
                    Vec3 nref(nd.at(x, y, 0), nd.at(x, y, 1), nd.at(x, y, 2));
                    double nlen = in.normal_blend.norm();
                    if (nref.norm() > 0.5 && nlen > 1e-9 && covered_count > 0) {
                        Vec3 ncam = view.camera.rotation * in.normal_blend;
                        Vec3 u = ncam / nlen;
                        Mat3 proj = (Mat3::Identity() - u * u.transpose()) / nlen;
                        Vec3 dn_cam = -(proj * nref);
                        gN += opts.loss.lambda2 / covered_count *
                              (view.camera.rotation.transpose() * dn_cam);
                    }
                    for (const auto& [src, wk] : contrib)
                        tg.normal[src] += wk * gN;
                }
            }
        }
    });

    g.weight_sum.assign(n, 0.0);
    g.pixel_scale = static_cast<double>(w) * h * 3;
    for (const auto& l : locals)
        for (int i = 0; i < n; ++i) {
            g.normal[i] += l.normal[i];
            g.transparency[i] += l.transparency[i];
            g.ior[i] += l.ior[i];
            g.base_color[i] += l.base[i];
            g.weight_sum[i] += l.weight[i];
        }

    for (int i = 0; i < n; ++i) {
        bool bad = !is_finite(g.normal[i]) || !std::isfinite(g.transparency[i]) ||
                   !std::isfinite(g.ior[i]) || !is_finite(g.base_color[i]);
        if (bad) {
            std::ostringstream msg;
            msg << "non-finite gradient for primitive " << i << " (normal "
                << g.normal[i].transpose() << ", t " << g.transparency[i] << ", ior " << g.ior[i]
                << ")";
            throw FitDivergedError(msg.str());
        }
    }
    return g;
}

FitState fit_attributes(std::vector<GaussianPrimitive> object, const std::vector<FitView>& views,
                        const ProbeGrid& grid, const BvhIndex& bvh, const FitOptions& opts) {
    if (views.empty())
        throw std::invalid_argument("fit_attributes: no views");
    const int n = static_cast<int>(object.size());
    FitState state;
    state.vel_normal.assign(n, Vec3::Zero());
    state.vel_transparency.assign(n, 0.0);
    state.vel_ior.assign(n, 0.0);
    state.vel_base.assign(n, Vec3::Zero());

    for (int iter = 0; iter < opts.iterations; ++iter) {
        const FitView& view = views[iter % views.size()];
        FitRender fw = fit_forward(object, view, grid, bvh, opts);
        state.loss_history.push_back(fw.total);
        AttributeGradients grads = fit_gradients(object, view, grid, bvh, opts);

        // Visibility preconditioning: each primitive's gradient becomes the
        // blend-weighted mean of the per-pixel loss-density terms, so step
        // sizes are comparable across primitives and the per-attribute
        // learning rates act on a per-pixel scale.
        const double beta = opts.momentum;
        for (int i = 0; i < n; ++i) {
            double denom = std::max(grads.weight_sum[i], 1e-12);
            double precond = grads.pixel_scale / denom;
            grads.normal[i] *= precond;
            grads.transparency[i] *= precond;
            grads.ior[i] *= precond;
            grads.base_color[i] *= precond;
        }
        for (int i = 0; i < n; ++i) {
            TransparentAttributes& a = object[i].attrs;
            if (opts.optimize.normal) {
                state.vel_normal[i] = beta * state.vel_normal[i] - opts.lr_normal * grads.normal[i];
                a.normal += state.vel_normal[i];
                double len = a.normal.norm();
                if (len < 1e-12)
                    a.normal = Vec3(0, 0, 1);
                else if (std::abs(len - 1.0) > 1e-12)
                    a.normal /= len;
            }
            if (opts.optimize.transparency) {
                state.vel_transparency[i] =
                    beta * state.vel_transparency[i] - opts.lr_transparency * grads.transparency[i];
                a.transparency = std::clamp(a.transparency + state.vel_transparency[i], 0.0, 1.0);
            }
            if (opts.optimize.ior) {
                state.vel_ior[i] = beta * state.vel_ior[i] - opts.lr_ior * grads.ior[i];
                a.ior = std::clamp(a.ior + state.vel_ior[i], 1.0, 3.0);
            }
            if (opts.optimize.base_color) {
                state.vel_base[i] = beta * state.vel_base[i] - opts.lr_base * grads.base_color[i];
                a.base_color += state.vel_base[i];
                for (int c = 0; c < 3; ++c)
                    a.base_color[c] = std::clamp(a.base_color[c], 0.0, 1.0);
            }
        }
        state.iteration = iter + 1;
    }
    state.primitives = std::move(object);
    return state;
}

} // namespace gsp
