#include <gtest/gtest.h>

#include <iostream>

#include "certificate_audit.hpp"

namespace {

class AuditEnvironment : public ::testing::Environment {
 public:
  void SetUp() override { dsmpc::testing::CertificateAudit::instance().install(); }
  void TearDown() override {
    auto& audit = dsmpc::testing::CertificateAudit::instance();
    audit.uninstall();
    const auto failures = audit.failures();
    for (const auto& f : failures) std::cerr << "certificate failure: " << f << "\n";
    EXPECT_TRUE(failures.empty()) << failures.size() << " of " << audit.checked()
                                  << " optimal solutions failed re-evaluation";
  }
};

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::AddGlobalTestEnvironment(new AuditEnvironment);
  return RUN_ALL_TESTS();
}
