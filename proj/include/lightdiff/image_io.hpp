#ifndef LIGHTDIFF_IMAGE_IO_HPP
#define LIGHTDIFF_IMAGE_IO_HPP

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <stdexcept>
#include <string>

#include "lightdiff/tensor.hpp"

namespace lightdiff {

/// Decodes an 8-bit image file into an RGB (3,H,W) tensor in [0,1].
template <typename Real>
TensorT<Real> load_image(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw std::runtime_error("load_image: cannot decode " + path);
    TensorT<Real> out({3, img.rows, img.cols});
    for (int y = 0; y < img.rows; ++y) {
        const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.cols; ++x) {
            out.at(0, y, x) = static_cast<Real>(row[x][2] / 255.0);  // BGR -> RGB
            out.at(1, y, x) = static_cast<Real>(row[x][1] / 255.0);
            out.at(2, y, x) = static_cast<Real>(row[x][0] / 255.0);
        }
    }
    return out;
}

/// Writes a (3,H,W) tensor in [0,1] as an 8-bit PNG.
template <typename Real>
void save_image(const std::string& path, const TensorT<Real>& image) {
    if (image.rank() != 3 || image.channels() != 3)
        throw std::invalid_argument("save_image: expected a (3,H,W) tensor");
    cv::Mat img(image.height(), image.width(), CV_8UC3);
    auto to_byte = [](Real v) {
        double d = static_cast<double>(v);
        d = d < 0 ? 0 : (d > 1 ? 1 : d);
        return static_cast<unsigned char>(std::lround(d * 255.0));
    };
    for (int y = 0; y < img.rows; ++y) {
        cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.cols; ++x) {
            row[x][2] = to_byte(image.at(0, y, x));
            row[x][1] = to_byte(image.at(1, y, x));
            row[x][0] = to_byte(image.at(2, y, x));
        }
    }
    if (!cv::imwrite(path, img))
        throw std::runtime_error("save_image: cannot write " + path);
}

}  // namespace lightdiff

#endif
