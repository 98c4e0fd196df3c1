#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "colt/rewrite.hpp"
#include "golden.hpp"
#include "test_support.hpp"

using namespace colt;

namespace {

Conversation golden_conv() {
    auto conv = parse_conversation(golden::kVosRecord);
    conv.extras["id"] = "vos-00000";
    return conv;
}

/// In-process rewrite service on a loopback port.
class LocalService {
public:
    explicit LocalService(httplib::Server::Handler handler) {
        server_.Post("/rewrite", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalService() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST(MockRewrite, KeepsRolesAndActionsChangesValues) {
    MockRewriteClient mock;
    const auto in = golden_conv();
    const auto out = llm_rewrite(in, &mock);
    ASSERT_EQ(out.turns.size(), in.turns.size());
    for (std::size_t i = 0; i < in.turns.size(); ++i) {
        EXPECT_EQ(out.turns[i].from, in.turns[i].from);
        EXPECT_EQ(out.turns[i].actions, in.turns[i].actions);
    }
    EXPECT_NE(out.turns[1].value, in.turns[1].value);
    EXPECT_EQ(out.extra_string("id"), "vos-00000");
    EXPECT_TRUE(validate(out, default_registry()).valid());
    EXPECT_EQ(serialize_conversation(llm_rewrite(in, &mock)), serialize_conversation(out));
}

TEST(MockRewrite, RephraseAlwaysChangesText) {
    EXPECT_EQ(MockRewriteClient::rephrase("Please wait."), "Kindly hold on.");
    EXPECT_EQ(MockRewriteClient::rephrase("Red."), "In short, Red.");
}

TEST(FixtureRewrite, RenamedToolIsAViolation) {
    FixtureRewriteClient stub;
    auto j = json::parse(golden::kVosRecord);
    j["conversations"][1]["actions"][0]["API_name"] = "video-segmentation";
    stub.push(j.dump());
    expect_error(ErrorKind::rewrite_violation, [&] { llm_rewrite(golden_conv(), &stub); });
}

TEST(FixtureRewrite, OtherViolations) {
    auto role = json::parse(golden::kVosRecord);
    role["conversations"][0]["from"] = "user";
    auto dropped = json::parse(golden::kVosRecord);
    dropped["conversations"].erase(3);
    auto added = json::parse(golden::kVosRecord);
    added["conversations"][3]["actions"].push_back({{"API_name", "asr"}, {"API_params", json::object()}});
    for (const auto& bad : {role.dump(), dropped.dump(), added.dump(), std::string("not json")}) {
        FixtureRewriteClient stub;
        stub.push(bad);
        expect_error(ErrorKind::rewrite_violation, [&] { llm_rewrite(golden_conv(), &stub); });
    }
}

TEST(FixtureRewrite, KeyedReplay) {
    FixtureRewriteClient stub;
    auto j = json::parse(golden::kVosRecord);
    j["conversations"][3]["value"] = "All segmented.";
    stub.add(serialize_conversation(golden_conv()), j.dump());
    EXPECT_EQ(*llm_rewrite(golden_conv(), &stub).turns[3].value, "All segmented.");
    EXPECT_EQ(*llm_rewrite(golden_conv(), &stub).turns[3].value, "All segmented.");
    expect_error(ErrorKind::service, [&] { llm_rewrite(parse_conversation(golden::kVosRecord), &stub); });
}

TEST(RewriteCorpus, DegradedWithoutClient) {
    const auto corpus = synthesize_corpus(default_registry().subset({"asr"}), 4, 1);
    const auto out = rewrite_corpus(corpus, nullptr);
    EXPECT_TRUE(out.degraded);
    EXPECT_EQ(out.corpus, corpus);
    expect_error(ErrorKind::unavailable, [&] { llm_rewrite(corpus[0], nullptr); });
}

TEST(RewriteCorpus, RejectedRecordsKeepOriginal) {
    const auto corpus = synthesize_corpus(default_registry().subset({"asr"}), 2, 1);
    FixtureRewriteClient stub;
    stub.push("{}");
    MockRewriteClient mock;
    stub.push(mock.rewrite({std::string(kRewriteSystemPrompt), serialize_conversation(corpus[1])}));
    const auto out = rewrite_corpus(corpus, &stub);
    EXPECT_EQ(out.rejected, 1u);
    EXPECT_EQ(out.rewritten, 1u);
    EXPECT_EQ(out.corpus[0], corpus[0]);
    EXPECT_NE(out.corpus[1], corpus[1]);
}

TEST(HttpRewrite, RoundTripThroughLocalService) {
    std::atomic<int> calls{0};
    std::string seen_prompt;
    LocalService service([&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        const auto body = json::parse(req.body);
        seen_prompt = body["system_prompt"].get<std::string>();
        MockRewriteClient mock;
        const auto record = mock.rewrite({seen_prompt, body["example_record"].get<std::string>()});
        res.set_content(json{{"record", record}}.dump(), "application/json");
    });
    HttpRewriteClient client(service.url());
    const auto out = llm_rewrite(golden_conv(), &client);
    EXPECT_EQ(calls.load(), 1);
    EXPECT_EQ(seen_prompt, kRewriteSystemPrompt);
    EXPECT_EQ(out.turns[1].actions, golden_conv().turns[1].actions);
}

TEST(HttpRewrite, RetriesServerErrorsThenReportsCount) {
    std::atomic<int> calls{0};
    LocalService service([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 503;
    });
    HttpRewriteClient client(service.url(), "/rewrite", 3, 5);
    try {
        llm_rewrite(golden_conv(), &client);
        FAIL() << "expected a service error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::service);
        EXPECT_NE(std::string(e.what()).find("after 3 attempt(s)"), std::string::npos) << e.what();
    }
    EXPECT_EQ(calls.load(), 3);
}

TEST(HttpRewrite, TransientFailureRecovers) {
    std::atomic<int> calls{0};
    LocalService service([&](const httplib::Request& req, httplib::Response& res) {
        if (++calls == 1) {
            res.status = 500;
            return;
        }
        res.set_content(json{{"record", json::parse(json::parse(req.body)["example_record"].get<std::string>())}}.dump(),
                        "application/json");
    });
    HttpRewriteClient client(service.url());
    EXPECT_EQ(llm_rewrite(golden_conv(), &client), golden_conv());
    EXPECT_EQ(calls.load(), 2);
}

TEST(HttpRewrite, UnreachableEndpoint) {
    HttpRewriteClient client("http://127.0.0.1:1", "/rewrite", 2, 1);
    expect_error(ErrorKind::service, [&] { llm_rewrite(golden_conv(), &client); });
}
