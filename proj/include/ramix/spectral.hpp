#pragma once

// Wavenumber grids, Lorentzian spectral skeletons, and rendering of pure
// component spectra.

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ramix/errors.hpp"
#include "ramix/text_io.hpp"

#ifndef RAMIX_DEFAULT_SKELETON_DIR
#define RAMIX_DEFAULT_SKELETON_DIR "data/skeletons"
#endif

namespace ramix {

/// Number of pure compounds in a mixture.
inline constexpr std::size_t kAnalytes = 5;

/// Compound names of the default library, in mixture order.
inline constexpr std::array<std::string_view, kAnalytes> kDefaultCompounds = {
    "ethanol", "glucose", "water", "glycerol", "lactic_acid"};

/// Uniform wavenumber axis in cm^-1. Channel i sits at start + i * step.
struct WavenumberGrid {
  double start = 200.0;
  double step = 1.0;
  std::size_t channels = 1800;

  double operator[](std::size_t i) const noexcept { return start + static_cast<double>(i) * step; }
  double end() const noexcept { return (*this)[channels - 1]; }
  std::size_t size() const noexcept { return channels; }

  void validate() const {
    if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("grid step must be > 0");
    if (!std::isfinite(start)) throw ValidationError("grid start must be finite");
    if (channels == 0) throw ValidationError("grid must have at least one channel");
  }

  /// Channel whose wavenumber is closest to `x`, clamped to the grid.
  std::size_t nearest_channel(double x) const noexcept {
    const double pos = std::round((x - start) / step);
    if (pos <= 0.0) return 0;
    if (pos >= static_cast<double>(channels - 1)) return channels - 1;
    return static_cast<std::size_t>(pos);
  }

  friend bool operator==(const WavenumberGrid&, const WavenumberGrid&) = default;
};

/// One Lorentzian band: peak height, centre (cm^-1) and FWHM (cm^-1).
struct LorentzianPeak {
  double amplitude = 1.0;
  double position = 0.0;
  double width = 1.0;

  friend bool operator==(const LorentzianPeak&, const LorentzianPeak&) = default;
};

/// Peak table of one pure compound.
struct SpectrumSkeleton {
  std::string compound;
  std::vector<LorentzianPeak> peaks;

  friend bool operator==(const SpectrumSkeleton&, const SpectrumSkeleton&) = default;
};

/// Intensities sampled on a grid.
struct Spectrum {
  std::vector<double> intensities;

  Spectrum() = default;
  explicit Spectrum(std::vector<double> v) : intensities(std::move(v)) {}
  explicit Spectrum(std::size_t n, double fill = 0.0) : intensities(n, fill) {}

  std::size_t size() const noexcept { return intensities.size(); }
  double operator[](std::size_t i) const noexcept { return intensities[i]; }
  double& operator[](std::size_t i) noexcept { return intensities[i]; }

  friend bool operator==(const Spectrum&, const Spectrum&) = default;
};

inline double eval_lorentzian(const LorentzianPeak& peak, double x) noexcept {
  const double r = (x - peak.position) / (peak.width / 2.0);
  return peak.amplitude / (1.0 + r * r);
}

inline void validate_peak(const LorentzianPeak& p) {
  if (!(p.amplitude > 0.0) || !std::isfinite(p.amplitude))
    throw ValidationError("peak amplitude must be finite and > 0");
  if (!(p.width > 0.0) || !std::isfinite(p.width))
    throw ValidationError("peak width must be finite and > 0");
  if (!std::isfinite(p.position)) throw ValidationError("peak position must be finite");
}

/// Checks peak invariants; with a grid, also requires every centre to lie on it.
inline void validate_skeleton(const SpectrumSkeleton& s, const WavenumberGrid* grid = nullptr) {
  if (s.compound.empty()) throw ValidationError("skeleton has no compound name");
  if (s.peaks.empty()) throw ValidationError("skeleton '" + s.compound + "' has no peaks");
  for (const auto& p : s.peaks) {
    validate_peak(p);
    if (grid && (p.position < grid->start || p.position > grid->end()))
      throw ValidationError("peak at " + text::format_double(p.position) + " lies outside the grid for '" +
                            s.compound + "'");
  }
}

/// Sum of the skeleton's Lorentzians at every grid channel, peaks added in file order.
inline Spectrum render_spectrum(const SpectrumSkeleton& skeleton, const WavenumberGrid& grid) {
  Spectrum out(grid.channels, 0.0);
  for (std::size_t i = 0; i < grid.channels; ++i) {
    const double x = grid[i];
    double acc = 0.0;
    for (const auto& p : skeleton.peaks) acc += eval_lorentzian(p, x);
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Skeleton files
//
//   # ramix skeleton v1
//   name: ethanol
//   a0,p0,w
//   1,882,12
//   ...
//
// Lines starting with '#' are comments. Numbers are written in shortest
// round-trip form, so save -> load reproduces every double exactly.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSkeletonHeader = "# ramix skeleton v1";

inline std::string format_skeleton(const SpectrumSkeleton& s) {
  std::string out;
  out += kSkeletonHeader;
  out += "\nname: ";
  out += s.compound;
  out += "\na0,p0,w\n";
  for (const auto& p : s.peaks) {
    text::append_double(out, p.amplitude);
    out += ',';
    text::append_double(out, p.position);
    out += ',';
    text::append_double(out, p.width);
    out += '\n';
  }
  return out;
}

inline SpectrumSkeleton parse_skeleton(std::string_view contents) {
  SpectrumSkeleton s;
  bool have_name = false;
  bool have_header = false;
  std::size_t lineno = 0;
  for (auto raw : text::lines(contents)) {
    ++lineno;
    auto line = text::trim(raw);
    if (line.front() == '#') continue;
    if (!have_name) {
      if (!line.starts_with("name:")) throw ParseError("skeleton: expected 'name:' line");
      s.compound = std::string(text::trim(line.substr(5)));
      if (s.compound.empty()) throw ParseError("skeleton: empty name");
      have_name = true;
      continue;
    }
    auto cells = text::split(line);
    if (!have_header) {
      if (cells.size() != 3 || text::trim(cells[0]) != "a0" || text::trim(cells[1]) != "p0" ||
          text::trim(cells[2]) != "w")
        throw ParseError("skeleton: expected column header 'a0,p0,w'");
      have_header = true;
      continue;
    }
    if (cells.size() != 3)
      throw ParseError("skeleton: line " + std::to_string(lineno) + " needs 3 columns");
    try {
      s.peaks.push_back({text::parse_double(cells[0]), text::parse_double(cells[1]),
                         text::parse_double(cells[2])});
    } catch (const ParseError& e) {
      throw ParseError("skeleton: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_name || !have_header) throw ParseError("skeleton: missing name or peak table");
  validate_skeleton(s);
  return s;
}

inline SpectrumSkeleton load_skeleton(const std::filesystem::path& path) {
  try {
    return parse_skeleton(text::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void save_skeleton(const SpectrumSkeleton& s, const std::filesystem::path& path) {
  validate_skeleton(s);
  text::write_file(path, format_skeleton(s));
}

/// $RAMIX_SKELETON_DIR if set, otherwise the directory bundled with the build.
inline std::filesystem::path default_skeleton_dir() {
  if (const char* env = std::getenv("RAMIX_SKELETON_DIR"); env && *env) return env;
  return RAMIX_DEFAULT_SKELETON_DIR;
}

/// Loads `<dir>/<name>.skel` for each default compound, in mixture order.
inline std::vector<SpectrumSkeleton> load_library(const std::filesystem::path& dir) {
  std::vector<SpectrumSkeleton> out;
  out.reserve(kAnalytes);
  for (auto name : kDefaultCompounds) out.push_back(load_skeleton(dir / (std::string(name) + ".skel")));
  return out;
}

inline std::vector<SpectrumSkeleton> default_library() { return load_library(default_skeleton_dir()); }

/// Largest intensity over the unperturbed renders; the scale for baseline defaults.
inline double reference_intensity(const std::vector<SpectrumSkeleton>& skeletons, const WavenumberGrid& grid) {
  double m = 0.0;
  for (const auto& s : skeletons)
    for (double v : render_spectrum(s, grid).intensities) m = std::max(m, v);
  return m;
}

}  // namespace ramix
