#include "surfelflow/surfelflow.h"

#include <string>

#include "sf/common.hpp"
#include "sf/parallel.hpp"

// C boundary: translate exceptions into status codes and stash the message in
// a thread-local buffer for sf_last_error().

namespace {

thread_local std::string g_last_error;

template <typename Fn>
sf_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return SF_OK;
    } catch (const sf::ConfigError& e) {
        g_last_error = e.what();
        return SF_ERR_CONFIG;
    } catch (const sf::DivergedLoss& e) {
        g_last_error = e.what();
        return SF_ERR_DIVERGED;
    } catch (const sf::MissingArtifact& e) {
        g_last_error = e.what();
        return SF_ERR_MISSING_ARTIFACT;
    } catch (const sf::ProtocolError& e) {
        g_last_error = e.what();
        return SF_ERR_PROTOCOL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return SF_ERROR;
    } catch (...) {
        g_last_error = "unknown error";
        return SF_ERROR;
    }
}

}  // namespace

extern "C" {

const char* sf_last_error(void) { return g_last_error.c_str(); }

const char* sf_version(void) { return "0.1.0"; }

sf_status sf_set_threads(int32_t n) {
    return guarded([&] {
        sf::require(n >= 0, "thread count must be >= 0");
        sf::set_thread_count(n);
    });
}

// Pipeline entry points are filled in by pipeline.cpp via these hooks.
sf_status sf_generate_scene(const char* config_path) {
    (void)config_path;
    g_last_error = "not yet wired";
    return SF_ERROR;
}
sf_status sf_train(const char* config_path) {
    (void)config_path;
    g_last_error = "not yet wired";
    return SF_ERROR;
}
sf_status sf_extract_meshes(const char* config_path) {
    (void)config_path;
    g_last_error = "not yet wired";
    return SF_ERROR;
}
sf_status sf_evaluate(const char* config_path) {
    (void)config_path;
    g_last_error = "not yet wired";
    return SF_ERROR;
}

sf_status sf_run_open(const char* config_path, sf_run** out_run) {
    (void)config_path;
    (void)out_run;
    g_last_error = "not yet wired";
    return SF_ERROR;
}
void sf_run_close(sf_run* run) { (void)run; }
sf_status sf_run_set_seed(sf_run* run, uint64_t seed) {
    (void)run;
    (void)seed;
    return SF_ERROR;
}
sf_status sf_run_set_lora_rank(sf_run* run, int32_t rank) {
    (void)run;
    (void)rank;
    return SF_ERROR;
}
sf_status sf_run_generate_scene(sf_run* run) {
    (void)run;
    return SF_ERROR;
}
sf_status sf_run_train(sf_run* run) {
    (void)run;
    return SF_ERROR;
}
sf_status sf_run_extract_meshes(sf_run* run) {
    (void)run;
    return SF_ERROR;
}
sf_status sf_run_evaluate(sf_run* run) {
    (void)run;
    return SF_ERROR;
}

}  // extern "C"
