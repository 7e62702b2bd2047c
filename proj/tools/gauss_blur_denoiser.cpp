// Reference external denoiser: separable Gaussian blur with σ = strength
// (pixels), radius ceil(3σ), replicated borders. Speaks the file protocol
// of the external-denoiser adapter; argv[1] is the exchange directory.

#include <cmath>
#include <iostream>

#include "cdpsr/io.hpp"
#include "cdpsr/priors.hpp"

int main(int argc, char** argv) {
    using namespace cdpsr;
    try {
        const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::current_path();
        const auto req = KeyValue::load(dir / "req.txt");
        if (req.get_int("version") != 1) {
            std::cerr << "unsupported protocol version " << req.get("version") << '\n';
            return 3;
        }
        const auto w = static_cast<std::size_t>(req.get_uint("width"));
        const auto h = static_cast<std::size_t>(req.get_uint("height"));
        const double sigma = req.get_double("strength");
        const auto img = read_raw(dir / "in.f64", w, h, 1.0);
        write_raw(dir / "out.f64", gaussian_blur(img, sigma));
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "gauss_blur_denoiser: " << e.what() << '\n';
        return 1;
    }
}
