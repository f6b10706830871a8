// Standalone perception process: consumes the pseudo-depth frame stream,
// emits one avoidance command datagram per processed frame. This is the
// counterpart the controller talks to in two-process mode.

#include <CLI11.hpp>

#include <cstdio>

#include "servosim/link.hpp"

int main(int argc, char** argv) {
    CLI::App app{"perception process: depth frames in, avoidance commands out"};

    std::string frame_addr = servosim::default_frame_addr();
    std::string cmd_addr = servosim::default_cmd_addr();
    servosim::PerceptParams params;

    app.add_option("--frame-addr", frame_addr, "frame stream endpoint to connect to");
    app.add_option("--cmd-addr", cmd_addr, "command datagram destination");
    app.add_option("--tau", params.decision.tau, "raw depth threshold");
    app.add_option("--area-min", params.decision.area_min, "minimum white fraction");
    app.add_option("--left-bound", params.decision.left_bound, "left partition bound");
    app.add_option("--right-bound", params.decision.right_bound, "right partition bound");

    CLI11_PARSE(app, argc, argv);

    try {
        servosim::SocketPerceptEndpoint endpoint(frame_addr, cmd_addr);
        servosim::PerceptionPipeline pipeline(params);
        servosim::run_perception_loop(endpoint, pipeline);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "percept: %s\n", e.what());
        return 1;
    }
    return 0;
}
