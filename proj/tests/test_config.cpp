#include <gtest/gtest.h>

#include <string>

#include "qkdlink/config.hpp"

using namespace qkdlink;
using namespace qkdlink::config;

namespace {

std::string paper_path() { return std::string(QKDLINK_SOURCE_DIR) + "/configs/paper.ini"; }

std::size_t error_line(const std::string& text) {
  try {
    load_string(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no ParseError for:\n" << text;
  return 0;
}

const char* kMinimalBudget =
    "[budget]\n"
    "mu_mol = 0.08\n"
    "eta_opt_alice = 0.54\n"
    "eta_col = 0.74\n"
    "on_frac = 0.77\n"
    "eta_pump = 0.47\n"
    "eta_opt_star = 0.9\n"
    "eta_col_star = 0.99\n";

}  // namespace

TEST(ConfigParse, PaperConfigLoads) {
  const auto c = load_file(paper_path());
  EXPECT_EQ(c.mu_mol, 0.08);
  EXPECT_EQ(c.link.rep_rate, 80e6);
  EXPECT_EQ(c.link.eta_bob, 0.24);
  EXPECT_EQ(c.loss_grid.size(), 41u);
  EXPECT_EQ(c.loss_grid.back(), 40.0);
  EXPECT_EQ(c.convention, rates::LossConvention::ChannelOnly);
  EXPECT_EQ(c.mu_ref, (std::vector<double>{0.31, 0.5}));
  ASSERT_TRUE(c.budget);
  EXPECT_EQ(c.budget->cases.size(), 2u);
  EXPECT_EQ(c.budget->provenance.at("eta_pump"), "measured");
  EXPECT_EQ(c.budget->provenance.at("qy"), "paper");
  EXPECT_EQ(c.simulate.workers, 4u);
  const auto models = c.sweep_models();
  ASSERT_EQ(models.size(), 5u);
  EXPECT_EQ(models[4].name, "sps_mu_ref_2");
}

TEST(ConfigParse, UnitSuffixesConvert) {
  const auto doc = Document::parse_string("[link]\nrep_rate = 40 MHz\nchannel_loss = 3.5 dB\n");
  EXPECT_EQ(*doc.number("link", "rep_rate"), 40e6);
  EXPECT_EQ(*doc.number("link", "channel_loss"), 3.5);
  EXPECT_EQ(*Document::parse_string("[link]\nrep_rate = 2 ghz\n").number("link", "rep_rate"), 2e9);
  EXPECT_EQ(*Document::parse_string("[link]\nrep_rate = 500 khz\n").number("link", "rep_rate"), 5e5);
  EXPECT_EQ(*Document::parse_string("[link]\np_dark = 2e-6\n").number("link", "p_dark"), 2e-6);
}

TEST(ConfigParse, DimensionedValuesNeedUnits) {
  EXPECT_EQ(error_line("[link]\nrep_rate = 80e6\n"), 2u);
  EXPECT_EQ(error_line("[source]\nmu_mol = 0.08\n[link]\nchannel_loss = 3\n"), 4u);
  EXPECT_EQ(error_line("[source]\nmu_mol = 0.08 db\n"), 2u);
  EXPECT_EQ(error_line("[sweep]\nloss_grid = 0, 10, 20\n"), 2u);
}

TEST(ConfigParse, UnknownKeysAndSectionsNameTheLine) {
  EXPECT_EQ(error_line("[source]\nmu_mol = 0.08\nmu_mole = 0.08\n"), 3u);
  EXPECT_EQ(error_line("# header\n\n[sauce]\nmu_mol = 0.08\n"), 3u);
  EXPECT_EQ(error_line("mu_mol = 0.08\n"), 1u);
  EXPECT_EQ(error_line("[source]\nmu_mol = 0.08\nmu_mol = 0.09\n"), 3u);
  EXPECT_EQ(error_line("[source]\nmu_mol 0.08\n"), 2u);
  EXPECT_EQ(error_line("[source\n"), 1u);
  EXPECT_EQ(error_line("[source]\nmu_mol =\n"), 2u);
  try {
    load_string("[link]\n\n; note\neta_bobb = 0.24\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("eta_bobb"), std::string::npos);
  }
}

TEST(ConfigParse, Provenance) {
  const auto doc = Document::parse_string("[source]\nmu_mol = 0.08 (paper)\ng2_zero = 0.02  # comment\n");
  EXPECT_EQ(doc.provenance("source", "mu_mol"), "paper");
  EXPECT_EQ(doc.provenance("source", "g2_zero"), "unspecified");
  EXPECT_EQ(*doc.number("source", "mu_mol"), 0.08);
  EXPECT_EQ(error_line("[source]\nmu_mol = 0.08 (guessed)\n"), 2u);
  EXPECT_EQ(*Document::parse_string("[link]\nrep_rate = 80 mhz (measured)\n").number("link", "rep_rate"), 80e6);
}

TEST(ConfigParse, LossRanges) {
  EXPECT_EQ(parse_loss_grid("0:5:20"), (std::vector<double>{0, 5, 10, 15, 20}));
  EXPECT_EQ(parse_loss_grid("0,7,14 db"), (std::vector<double>{0, 7, 14}));
  EXPECT_EQ(parse_loss_grid("0:0.5:1"), (std::vector<double>{0, 0.5, 1}));
  EXPECT_THROW(parse_loss_grid(""), ConfigError);
  EXPECT_THROW(parse_loss_grid("0:0:10"), ConfigError);
  EXPECT_THROW(parse_loss_grid("10:1:0"), ConfigError);
  EXPECT_THROW(parse_loss_grid("0:1"), ConfigError);
  EXPECT_THROW(parse_loss_grid("0,x"), ConfigError);
}

TEST(ConfigLoad, RangeChecks) {
  EXPECT_EQ(error_line("[source]\nmu_mol = 1.5\n"), 2u);
  EXPECT_EQ(error_line("[link]\n\neta_bob = 1.2\n"), 3u);
  EXPECT_EQ(error_line("[link]\ne_det_wcp = 0.6\n"), 2u);
  EXPECT_EQ(error_line("[protocol]\nf_ec = 0.9\n"), 2u);
  EXPECT_EQ(error_line("[protocol]\nqber_sps = 0.6\n"), 2u);
  EXPECT_EQ(error_line("[simulate]\npulses = 0\n"), 2u);
  EXPECT_EQ(error_line("[simulate]\npulses = -5\n"), 2u);
  EXPECT_EQ(error_line("[simulate]\nmodel = laser\n"), 2u);
  EXPECT_EQ(error_line("[simulate]\nbasis_split = 1\n"), 2u);
  EXPECT_EQ(error_line("[simulate]\nalice_sequence = x\n"), 2u);
  EXPECT_EQ(error_line("[sweep]\nloss_includes_bob = maybe\n"), 2u);
  EXPECT_EQ(error_line("[source]\nwcp_mu = 0.5\nwcp_nu = 0.6\n"), 3u);
}

TEST(ConfigLoad, Defaults) {
  const auto c = load_string("");
  EXPECT_EQ(c.mu_mol, 0.08);
  EXPECT_EQ(c.link.f_ec, 1.1);
  EXPECT_EQ(c.loss_grid, (std::vector<double>{0.0}));
  EXPECT_FALSE(c.budget);
  // The default model list names curves the empty config cannot build.
  EXPECT_THROW(c.sweep_models(), ConfigError);
}

TEST(ConfigLoad, MeasuredQberAppliesOnlyToSps) {
  const auto c = load_string("[protocol]\nqber_sps = 0.034\n[sweep]\nmodels = sps, wcp_no_decoy\n");
  const auto m = c.sweep_models();
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].measured_qber, 0.034);
  EXPECT_FALSE(m[1].measured_qber);
  EXPECT_EQ(m[0].e_det, 0.039);
  EXPECT_EQ(m[1].e_det, 0.008);
}

TEST(ConfigLoad, SimulateLinkUsesModelErrorRate) {
  auto c = load_string("[link]\nchannel_loss = 10 db\n[simulate]\nmodel = wcp\n");
  EXPECT_EQ(c.simulate_link().e_det, 0.008);
  EXPECT_NEAR(c.simulate_link().eta_channel, 0.1, 1e-15);
  c = load_string("[source]\nwcp_nu = 0.05\n[simulate]\nmodel = wcp_decoy\n");
  EXPECT_EQ(sources::mean_photon_number(c.simulate_source()), 0.05);
  EXPECT_THROW(load_string("[simulate]\nmodel = wcp_decoy\n").simulate_source(), ConfigError);
}

TEST(ConfigLoad, BudgetMissingKeyIsNamed) {
  EXPECT_NO_THROW(load_string(kMinimalBudget));
  std::string text = kMinimalBudget;
  text.erase(text.find("on_frac"), std::string("on_frac = 0.77\n").size());
  try {
    load_string(text);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("on_frac"), std::string::npos);
  }
  text = kMinimalBudget;
  text.erase(text.find("eta_pump"), std::string("eta_pump = 0.47\n").size());
  try {
    load_string(text);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("sat_param"), std::string::npos);
  }
}

TEST(ConfigLoad, BudgetPumpSources) {
  const auto direct = load_string(kMinimalBudget).budget;
  EXPECT_EQ(direct->pump(), 0.47);
  EXPECT_EQ(direct->pump_star(), 0.75);
  std::string text = kMinimalBudget;
  text.replace(text.find("eta_pump = 0.47"), std::string("eta_pump = 0.47").size(), "sat_param = 2");
  EXPECT_DOUBLE_EQ(load_string(text).budget->pump(), 0.5);
  EXPECT_EQ(error_line(std::string(kMinimalBudget) + "qy = 0.6, 0.9\n"), 9u);
  EXPECT_EQ(error_line(std::string(kMinimalBudget) + "eta_pump_star = 1.5\n"), 9u);
}
