#pragma once

// Explicit instantiation list shared by the kernel translation units.
#define RFN_INSTANTIATE(T)                                                                    \
  template void matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,  \
                          std::size_t, std::size_t);                                          \
  template void matmul_at_b<T>(std::span<const T>, std::span<const T>, std::span<T>,          \
                               std::size_t, std::size_t, std::size_t);                        \
  template void matmul_a_bt<T>(std::span<const T>, std::span<const T>, std::span<T>,          \
                               std::size_t, std::size_t, std::size_t);                        \
  template void conv2d_forward<T>(std::span<const T>, std::span<const T>, std::span<T>,       \
                                  const ConvGeometry&);                                       \
  template void conv2d_backward_input<T>(std::span<const T>, std::span<const T>,              \
                                         std::span<T>, const ConvGeometry&);                  \
  template void conv2d_backward_kernel<T>(std::span<const T>, std::span<const T>,             \
                                          std::span<T>, const ConvGeometry&);                 \
  template void gather_forward<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t, \
                                  const GatherMap&);                                          \
  template void gather_backward<T>(std::span<const T>, std::span<T>, std::size_t,             \
                                   std::size_t, const GatherMap&);

