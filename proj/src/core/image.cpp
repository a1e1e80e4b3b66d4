#include "gsp/core/image.hpp"

#include <limits>
#include <stdexcept>

namespace gsp {

double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("mse: image shapes differ");
    double acc = 0.0;
    const auto& da = a.data();
    const auto& db = b.data();
    for (size_t i = 0; i < da.size(); ++i) {
        double x = std::clamp(da[i], 0.0f, 1.0f);
        double y = std::clamp(db[i], 0.0f, 1.0f);
        acc += (x - y) * (x - y);
    }
    return acc / static_cast<double>(da.size());
}

double psnr(const Image& a, const Image& b) {
    double m = mse(a, b);
    if (m <= 0.0)
        return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(m);
}

} // namespace gsp
