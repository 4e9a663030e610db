#include <gtest/gtest.h>

#include <string>

#include "esds/plot.hpp"

using namespace esds;

TEST(Csv, ParsesHeaderAndRows) {
  const CsvTable t = parse_csv("iteration,mean_return,tag\r\n0,1.5,a\n\n1,2.5,\n");
  ASSERT_EQ(t.header.size(), 3u);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.numbers("mean_return"), (std::vector<double>{1.5, 2.5}));
  EXPECT_EQ(t.strings("tag"), (std::vector<std::string>{"a", ""}));
  EXPECT_EQ(t.column("iteration"), 0);
}

TEST(Csv, Errors) {
  EXPECT_THROW(parse_csv(""), Error);
  const CsvTable t = parse_csv("a,b\n1,x\n2\n");
  EXPECT_THROW(t.column("c"), Error);
  EXPECT_THROW(t.numbers("b"), Error);
  try {
    (void)t.numbers("b");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Format);
  }
}

TEST(Svg, LineChart) {
  Series s;
  s.label = "return <mean>";
  s.x = {0, 1, 2};
  s.y = {0.1, 0.5, 0.4};
  const std::string svg = line_chart_svg({s}, "Training", "iteration", "return");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
  EXPECT_NE(svg.find("return &lt;mean&gt;"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Svg, BarChart) {
  const std::string svg = bar_chart_svg({"perceptive", "blind"}, {3.2, -0.5}, "Score", "J");
  std::size_t rects = 0;
  for (std::size_t p = svg.find("<rect"); p != std::string::npos; p = svg.find("<rect", p + 1)) ++rects;
  EXPECT_GE(rects, 2u);
  EXPECT_NE(svg.find("perceptive"), std::string::npos);
  EXPECT_NE(svg.find("-0.500"), std::string::npos);
  EXPECT_THROW(bar_chart_svg({"a"}, {}, "t", "y"), Error);
}
