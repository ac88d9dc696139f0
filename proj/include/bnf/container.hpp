#pragma once

#include <string>
#include <variant>

#include "bnf/bitplane.hpp"
#include "bnf/tensor.hpp"

namespace bnf {

// Binary tensor container, magic "BNT1":
//   magic (4 bytes), u8 rank, rank x u32 LE dims, u8 dtype, payload.
// dtype 0: 32-bit real, f32 LE, row-major.
// dtype 1: fixed point, followed by u8 M; payload u8 per value for M <= 8,
//          else u16 LE, row-major.
// dtype 2: packed bits, followed by u8 M; dims are the base H x W x C shape
//          and the payload is the row-major bit sequence of the logical
//          H x W x (C*M) tensor (bit c*M + m per pixel), packed LSB-first
//          into u64 LE words with zero padding in the final word.
using ContainerTensor = std::variant<Tensor, FixedTensor, BitPlaneTensor>;

void write_container(const std::string& path, const Tensor& t);
void write_container(const std::string& path, const FixedTensor& t);
void write_container(const std::string& path, const BitPlaneTensor& t);

ContainerTensor read_container(const std::string& path);

// Serialized bytes (same layout as the file); used for round-trip checks.
std::vector<uint8_t> container_bytes(const ContainerTensor& t);

}  // namespace bnf
