#include <cstdio>
#include <iostream>

#include "common.hpp"
#include "cmfd/attacks.hpp"
#include "cmfd/io.hpp"

namespace {

std::vector<double> numbers(const std::string& text, std::size_t n, const char* what) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    try {
      v.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw cmfd::ArgumentError(std::string(what) + ": bad number '" + item + "'");
  }
  if (v.size() != n) throw cmfd::ArgumentError(std::string(what) + ": expected " + std::to_string(n) + " values");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Copy a rectangle of an image to another place, optionally rotated and scaled"};
  std::string image, region, offset, out = "forged.png", mask_out = "forged_mask.png";
  double rotate = 0.0, scale = 1.0;
  app.add_option("image", image, "source image")->required()->check(CLI::ExistingFile);
  app.add_option("--region", region, "x,y,w,h of the copied rectangle")->required();
  app.add_option("--offset", offset, "dx,dy of the paste")->required();
  app.add_option("--rotate", rotate, "rotate the copy by D degrees about its centre");
  app.add_option("--scale", scale, "scale the copy by F about its centre");
  app.add_option("--out", out, "forged image")->capture_default_str();
  app.add_option("--mask-out", mask_out, "ground-truth mask (source and paste)")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  return cmfd::tools::guarded([&] {
    const auto r = numbers(region, 4, "--region");
    const auto o = numbers(offset, 2, "--offset");
    const auto img = cmfd::load_image(image);
    const auto f = cmfd::make_forgery(img, static_cast<int>(r[0]), static_cast<int>(r[1]), static_cast<int>(r[2]),
                                      static_cast<int>(r[3]), {o[0], o[1], rotate, scale});
    cmfd::save_image(f.image, out);
    cmfd::save_mask(f.truth, mask_out);
    std::cout << out << ", " << mask_out << ": " << cmfd::count_nonzero(f.truth) << " forged pixels\n";
    return 0;
  });
}
