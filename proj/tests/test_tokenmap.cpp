// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "kpcc/errors.hpp"
#include "kpcc/tokenmap.hpp"
#include "test_util.hpp"

using namespace kpcc;

TEST_CASE("affine codebook endpoints") {
    const auto cb8 = default_codebook(8);
    CHECK(cb8.bos() == 0);
    CHECK(cb8.eos() == 1);
    CHECK(cb8.pad() == 2);
    CHECK(cb8.token_for(1) == 3);
    CHECK(cb8.token_for(255) == 257);
    CHECK(cb8.vocab_size() == 258);
    const auto cb12 = default_codebook(12);
    CHECK(cb12.token_for(4095) == 4097);
    CHECK(cb12.vocab_size() == 4098);
    CHECK_THROWS_AS(default_codebook(8, 3, 257), ParameterError);
    CHECK_THROWS_AS(default_codebook(8, 2), ParameterError);
    CHECK(default_codebook(8, 10, 1000).token_for(1) == 10);
}

TEST_CASE("codebook round trip is exhaustive for K up to 12") {
    for (int k : {2, 8, 12}) {
        const auto cb = default_codebook(k);
        for (std::uint32_t s = 1; s < (1u << k); ++s) REQUIRE(cb.symbol_for(cb.token_for(s)) == s);
        CHECK_THROWS_AS(cb.token_for(0), MappingError);
        CHECK_THROWS_AS(cb.token_for(1u << k), MappingError);
        CHECK_THROWS_AS(cb.symbol_for(cb.bos()), MappingError);
    }
}

TEST_CASE("file codebook onto 255 arbitrary ids in a 32000 vocabulary") {
    std::mt19937_64 rng(8);
    std::vector<TokenId> ids(31990);
    std::iota(ids.begin(), ids.end(), 10u);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(255);
    const Codebook cb(8, 1, 2, 0, ids, 32000);

    test::TempDir dir;
    save_codebook(cb, dir.file("cb.txt"));
    const auto loaded = load_codebook(dir.file("cb.txt"), 8, 32000);
    CHECK(loaded.digest() == cb.digest());
    CHECK(loaded.kind() == Codebook::Kind::file);
    for (std::uint32_t s = 1; s < 256; ++s) {
        REQUIRE(loaded.token_for(s) == ids[s - 1]);
        REQUIRE(loaded.symbol_for(ids[s - 1]) == s);
    }
    // ids outside the image are rejected
    std::vector<bool> in_image(32000, false);
    for (auto t : ids) in_image[t] = true;
    int rejected = 0;
    for (TokenId t = 0; t < 32000; ++t) {
        if (!in_image[t] && !loaded.is_special(t)) {
            CHECK_THROWS_AS(loaded.symbol_for(t), MappingError);
            if (++rejected == 200) break;
        }
    }
    CHECK(cb.digest() != default_codebook(8, 3, 32000).digest());
}

TEST_CASE("codebook file parsing") {
    test::TempDir dir;
    std::string text = "# bos eos pad\n0\n1\n2\n\n";
    for (int s = 1; s < 4; ++s) text += std::to_string(10 + s) + "\n";
    test::write_text(dir.file("k2.txt"), text);
    const auto cb = load_codebook(dir.file("k2.txt"), 2);
    CHECK(cb.vocab_size() == 14);
    CHECK(cb.token_for(3) == 13);

    test::write_text(dir.file("short.txt"), "0\n1\n2\n5\n");
    CHECK_THROWS_AS(load_codebook(dir.file("short.txt"), 2), FormatError);
    test::write_text(dir.file("dup.txt"), "0\n1\n2\n5\n5\n6\n");
    CHECK_THROWS_AS(load_codebook(dir.file("dup.txt"), 2), ParameterError);
    test::write_text(dir.file("clash.txt"), "0\n1\n2\n5\n1\n6\n");
    CHECK_THROWS_AS(load_codebook(dir.file("clash.txt"), 2), ParameterError);
    test::write_text(dir.file("junk.txt"), "0\n1\nx\n");
    CHECK_THROWS_AS(load_codebook(dir.file("junk.txt"), 2), FormatError);
    CHECK_THROWS_AS(load_codebook(dir.file("none.txt"), 2), IoError);
}

TEST_CASE("chunk boundary arithmetic") {
    const auto cb = default_codebook(8);
    const std::vector<std::uint16_t> five{1, 2, 3, 4, 5};
    const auto one = tokenize_chunks(five, cb, 512);
    REQUIRE(one.size() == 1);
    CHECK(one[0].tokens.size() == 7);
    CHECK(one[0].tokens.front() == cb.bos());
    CHECK(one[0].tokens.back() == cb.eos());
    CHECK(one[0].payload_len() == 5);

    const std::vector<std::uint16_t> many(1025, 7);
    const auto three = tokenize_chunks(many, cb, 512);
    REQUIRE(three.size() == 3);
    CHECK(three[0].payload_len() == 512);
    CHECK(three[1].payload_len() == 512);
    CHECK(three[2].payload_len() == 1);
    for (std::uint32_t i = 0; i < 3; ++i) CHECK(three[i].chunk_index == i);

    CHECK(tokenize_chunks(std::vector<std::uint16_t>{}, cb, 4).empty());
    CHECK_THROWS_AS(tokenize_chunks(five, cb, 0), ParameterError);
    CHECK_THROWS_AS(tokenize_chunks(std::vector<std::uint16_t>{0}, cb, 4), MappingError);
    CHECK_THROWS_AS(tokenize_chunks(std::vector<std::uint16_t>{256}, cb, 4), MappingError);
}

TEST_CASE("split and merge are inverse for many chunk lengths, in any order") {
    std::mt19937_64 rng(4);
    const auto cb = default_codebook(12);
    std::vector<std::uint16_t> symbols(10000);
    for (auto& s : symbols) s = static_cast<std::uint16_t>(1 + rng() % 4095);
    for (std::size_t len : {1, 2, 7, 512, 9999, 10000, 20000}) {
        auto chunks = tokenize_chunks(symbols, cb, len);
        CHECK(chunks.size() == (symbols.size() + len - 1) / len);
        std::shuffle(chunks.begin(), chunks.end(), rng);
        CHECK(detokenize_chunks(chunks, cb) == symbols);
    }
}

TEST_CASE("detokenize rejects adversarial chunks") {
    const auto cb = default_codebook(8);
    const std::vector<std::uint16_t> syms{9, 8, 7, 6};
    const auto good = tokenize_chunks(syms, cb, 2);
    CHECK(detokenize_chunks({{0, {cb.bos(), cb.token_for(42), cb.eos()}}}, cb) == std::vector<std::uint16_t>{42});

    auto no_eos = good;
    no_eos[1].tokens.pop_back();
    CHECK_THROWS_AS(detokenize_chunks(no_eos, cb), IntegrityError);

    auto no_bos = good;
    no_bos[0].tokens.front() = cb.token_for(1);
    CHECK_THROWS_AS(detokenize_chunks(no_bos, cb), IntegrityError);

    auto dup = good;
    dup[1].chunk_index = 0;
    CHECK_THROWS_AS(detokenize_chunks(dup, cb), IntegrityError);

    auto gap = good;
    gap[1].chunk_index = 2;
    CHECK_THROWS_AS(detokenize_chunks(gap, cb), IntegrityError);

    auto inner = good;
    inner[0].tokens[1] = cb.eos();
    CHECK_THROWS_AS(detokenize_chunks(inner, cb), IntegrityError);

    const auto wide = default_codebook(8, 3, 300);
    auto stray = tokenize_chunks(syms, wide, 2);
    stray[0].tokens[1] = 299;
    CHECK_THROWS_AS(detokenize_chunks(stray, wide), MappingError);
}
