#pragma once
// HTTP chat-completion backend for patch proposal. Kept in its own header so
// translation units that only need the mock skip the httplib dependency.

#include "opmend/proposer.hpp"

#include <httplib.h>

namespace opmend {

class RemoteProposer : public Proposer {
public:
    RemoteProposer(std::string host, int port, std::string path = "/v1/chat/completions",
                   std::string model = "gpt-4o-mini")
        : host_(std::move(host)), port_(port), path_(std::move(path)),
          model_(std::move(model)) {}

    std::string complete(const ProposerRequest& req) override {
        json body;
        body["model"] = model_;
        body["temperature"] = req.temperature;
        body["max_tokens"] = 512;
        json messages = json::array();
        messages.push_back({{"role", "system"}, {"content", system_prompt(req)}});
        messages.push_back({{"role", "user"}, {"content", req.serialized_trace}});
        body["messages"] = messages;

        httplib::Client client(host_, port_);
        client.set_connection_timeout(5, 0);
        client.set_read_timeout(30, 0);
        auto res = client.Post(path_, body.dump(), "application/json");
        if (!res)
            throw ProposerTransportError("proposer endpoint unreachable: " + host_ + ":" +
                                         std::to_string(port_));
        if (res->status != 200)
            throw ProposerTransportError("proposer endpoint returned HTTP " +
                                         std::to_string(res->status));
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
            throw ProposerTransportError("malformed completion envelope");
        const auto& msg = reply["choices"][0];
        if (!msg.contains("message") || !msg["message"].contains("content"))
            throw ProposerTransportError("malformed completion envelope");
        return msg["message"]["content"].get<std::string>();
    }

private:
    static std::string system_prompt(const ProposerRequest& req) {
        std::string p =
            "You repair process-knowledge operators. Reply with exactly one JSON object, "
            "no prose, matching this closed schema: {\"edit_type\": one of "
            "ADD_PRECONDITION | REFINE_EFFECT | UPDATE_TOOL_SCHEMA, \"action\": add | "
            "replace | remove, \"target\": slot, \"predicate\": {name, args, negated} or "
            "\"schema_field\": {name, type, version}, \"rationale\": text}. Examples:\n";
        for (const auto& ex : req.few_shot) p += ex + "\n";
        return p;
    }

    std::string host_;
    int port_;
    std::string path_;
    std::string model_;
};

}  // namespace opmend
