#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "sml/checkpoint.hpp"
#include "sml/rng.hpp"

using namespace sml;

TEST_CASE("checkpoint round trip preserves names, shapes, and f32 values") {
    RngStream rng(3, "ckpt");
    Checkpoint ckpt;
    DenseMatrix a(4, 3), b(1, 7);
    for (double& v : a.data) v = rng.normal();
    for (double& v : b.data) v = rng.normal();
    ckpt.add("user.F1", a);
    ckpt.add("item.b2", b);

    std::stringstream ss;
    write_checkpoint(ss, ckpt);
    Checkpoint back = read_checkpoint(ss);

    REQUIRE(back.tensors.size() == 2);
    CHECK(back.tensors[0].first == "user.F1");
    CHECK(back.tensors[1].first == "item.b2");
    const DenseMatrix& a2 = back.require("user.F1");
    REQUIRE(a2.rows == 4);
    REQUIRE(a2.cols == 3);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a2.data[i] == static_cast<double>(static_cast<float>(a.data[i])));
}

TEST_CASE("checkpoint rejects unknown magic and version") {
    std::stringstream bad("XXXX\x01\x00\x00\x00");
    CHECK_THROWS_WITH(read_checkpoint(bad), Catch::Matchers::ContainsSubstring("magic"));

    Checkpoint ckpt;
    ckpt.add("t", DenseMatrix(1, 1, 1.0));
    std::stringstream ss;
    write_checkpoint(ss, ckpt);
    std::string bytes = ss.str();
    bytes[4] = 9;  // bump version field
    std::stringstream wrong(bytes);
    CHECK_THROWS_WITH(read_checkpoint(wrong), Catch::Matchers::ContainsSubstring("version"));
}

TEST_CASE("checkpoint rejects truncated payloads") {
    Checkpoint ckpt;
    ckpt.add("w", DenseMatrix(2, 2, 0.5));
    std::stringstream ss;
    write_checkpoint(ss, ckpt);
    std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS(read_checkpoint(cut));
}
