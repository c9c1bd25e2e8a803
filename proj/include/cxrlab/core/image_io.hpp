#pragma once

#include <string>

#include "cxrlab/core/tensor.hpp"

namespace cxr {

// Reads a single-channel 8- or 16-bit grayscale PNG into an [H,W] tensor of
// raw intensities (0..255 or 0..65535). Color or palette images are rejected.
Tensor readGrayPng(const std::string& path);

// Writes an [H,W] tensor as an 8-bit grayscale PNG. Values are clamped to
// [0,255] and rounded.
void writeGrayPng8(const std::string& path, const Tensor& pixels);

// Writes an [H,W] tensor as a 16-bit grayscale PNG (clamped to [0,65535]).
void writeGrayPng16(const std::string& path, const Tensor& pixels);

// Bit depth of a PNG on disk without loading pixel data.
int pngBitDepth(const std::string& path);

// Process-wide tag stamped as a `config_hash` text chunk into every PNG
// written while non-empty. Lets artifact producers mark outputs without
// threading the value through every writer call.
void setPngConfigTag(const std::string& tag);
const std::string& pngConfigTag();

// The embedded `config_hash` text chunk, or "" when absent.
std::string readPngConfigTag(const std::string& path);

}  // namespace cxr
