#include <doctest.h>

#include "mp4_fixture.hpp"
#include "pcap_fixture.hpp"
#include "simobs/error.hpp"
#include "simobs/mp4.hpp"
#include "simobs/pcap.hpp"
#include "simobs/random.hpp"

using namespace simobs;
using fixture::Bytes;

namespace {

Bytes mutate(Bytes b, Rng& rng) {
  switch (rng.below(4)) {
    case 0:
      for (int k = 0; k < 1 + static_cast<int>(rng.below(4)) && !b.empty(); ++k)
        b[rng.below(b.size())] = static_cast<std::uint8_t>(rng.below(256));
      break;
    case 1:
      b.resize(rng.below(b.size() + 1));
      break;
    case 2:
      if (!b.empty()) b[rng.below(b.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8));
      break;
    default:
      b.insert(b.begin() + static_cast<std::ptrdiff_t>(rng.below(b.size() + 1)), static_cast<std::uint8_t>(rng.below(256)));
  }
  return b;
}

// Every outcome is either a parse or a typed Error.
template <typename F>
void survives(F&& f) {
  try {
    f();
  } catch (const Error&) {
  }
}

}  // namespace

TEST_CASE("mutated pcaps never escape the error taxonomy") {
  fixture::PcapWriter eth;
  eth.record_us(1000, fixture::ethernet({1, 2, 3, 4, 5, 6}, 120));
  eth.record_us(2000, fixture::ethernet_ipv4({1, 2, 3, 4, 5, 7}, {10, 0, 0, 1}, 200));
  fixture::PcapWriter rt(127);
  rt.record_us(1000, fixture::concat({fixture::radiotap(18), fixture::dot11_data({1, 2, 3, 4, 5, 6}, 30)}));
  rt.record_us(1500, fixture::concat({fixture::radiotap(12), fixture::dot11_ack({1, 2, 3, 4, 5, 6})}));
  Rng rng(2718);
  for (const auto* w : {&eth, &rt})
    for (int i = 0; i < 5000; ++i) {
      const Bytes b = mutate(w->bytes, rng);
      survives([&] {
        const auto recs = read_pcap(std::span(b));
        for (const auto& r : recs) survives([&] { (void)transmitter_of(r); });
        (void)extract_device_series(recs, 0, 0.001, 4);
      });
    }
}

TEST_CASE("mutated mp4s never escape the error taxonomy") {
  const Bytes f = fixture::mp4_file({fixture::trak("vide", 1000, fixture::stts({{3, 500}}), fixture::stsz({10, 20, 30})),
                                     fixture::trak("soun", 48000, fixture::stts({{2, 1024}}), fixture::stsz_uniform(9, 2))});
  Rng rng(31415);
  for (int i = 0; i < 10000; ++i) {
    const Bytes b = mutate(f, rng);
    survives([&] {
      const auto t = parse_mp4(std::span(b));
      survives([&] { (void)video_byte_series(t, 1); });
    });
  }
}
