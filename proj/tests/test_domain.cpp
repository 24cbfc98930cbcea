#include "doctest.h"

#include "runstyle/domain.hpp"
#include "support/fixtures.hpp"

using namespace runstyle;

TEST_CASE("style indices follow the taxonomy order") {
    CHECK(label_index(StyleLabel::egg_beater) == 0);
    CHECK(label_index(StyleLabel::narrow_stance) == 7);
    for (auto s : kAllStyles) CHECK(index_label(label_index(s)) == s);
}

TEST_CASE("all 13 enum members round-trip through their names") {
    for (auto s : kAllStyles) CHECK(parse_style(to_string(s)) == s);
    for (auto s : kAllSensors) CHECK(parse_sensor(to_string(s)) == s);
    CHECK(to_string(SensorLocation::com) == "com");
    CHECK_FALSE(parse_style("jogging"));
    CHECK_FALSE(parse_sensor("wrist"));
}

TEST_CASE("sensor order matches the table columns") {
    CHECK(sensor_index(SensorLocation::com) == 0);
    CHECK(sensor_index(SensorLocation::lfoot) == 1);
    CHECK(sensor_index(SensorLocation::lshank) == 2);
    CHECK(sensor_index(SensorLocation::rfoot) == 3);
    CHECK(sensor_index(SensorLocation::rshank) == 4);
    CHECK(display_name(SensorLocation::lfoot) == "LFoot");
}

TEST_CASE("complete dataset validates clean") {
    const auto d = fixtures::constant_dataset(10, 10);
    CHECK(d.recordings.size() == 400);
    CHECK(validate_dataset(d).empty());
}

TEST_CASE("missing sensor recording is reported by key") {
    auto d = fixtures::constant_dataset(2, 10);
    std::erase_if(d.recordings, [](const ImuRecording& r) {
        return r.subject_id == "S01" && r.style == StyleLabel::bouncing && r.sensor == SensorLocation::com;
    });
    const auto report = validate_dataset(d);
    REQUIRE(report.size() == 1);
    CHECK(report[0].key == "S01/bouncing/com");
    CHECK(report[0].rule == "missing sensor recording");
}

TEST_CASE("wrong sampling rate is reported") {
    auto d = fixtures::constant_dataset(1, 10);
    d.recordings[3].fs = 100.0;
    const auto report = validate_dataset(d);
    REQUIRE(report.size() == 1);
    CHECK(report[0].rule == "sampling rate != 500");
}

TEST_CASE("other violations") {
    SUBCASE("duplicate key") {
        auto d = fixtures::constant_dataset(1, 10);
        d.recordings.push_back(d.recordings.front());
        CHECK_FALSE(validate_dataset(d).empty());
    }
    SUBCASE("non-finite sample") {
        auto d = fixtures::constant_dataset(1, 10);
        d.recordings[0].samples[4].ay = std::nan("");
        CHECK_FALSE(validate_dataset(d).empty());
    }
    SUBCASE("empty recording") {
        auto d = fixtures::constant_dataset(1, 10);
        d.recordings[0].samples.clear();
        CHECK_FALSE(validate_dataset(d).empty());
    }
    SUBCASE("unequal sensor lengths") {
        auto d = fixtures::constant_dataset(1, 10);
        d.recordings[0].samples.pop_back();
        CHECK_FALSE(validate_dataset(d).empty());
    }
    SUBCASE("negative height") {
        auto d = fixtures::constant_dataset(1, 10);
        d.subjects[0].height_m = -1.7;
        CHECK_FALSE(validate_dataset(d).empty());
    }
}

TEST_CASE("validation is pure") {
    auto d = fixtures::constant_dataset(2, 10);
    d.recordings[0].fs = 250.0;
    const auto a = validate_dataset(d), b = validate_dataset(d);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].key == b[i].key);
        CHECK(a[i].rule == b[i].rule);
    }
}
