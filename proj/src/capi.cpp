#include "gradprop/gradprop.h"

#include <cstring>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "gradprop/commands.hpp"

struct gp_config {
    gradprop::RunConfig cfg;
};

struct gp_model {
    gradprop::Model model;
    std::optional<gradprop::ForwardPass> last_forward;
};

namespace {

thread_local std::string g_last_error;

gp_status fail(gp_status status, std::string message) {
    g_last_error = std::move(message);
    return status;
}

// Maps exceptions thrown by the core onto status codes.
template <typename Fn>
gp_status guarded(Fn&& fn) noexcept {
    try {
        g_last_error.clear();
        return fn();
    } catch (const gradprop::ConfigError& e) {
        return fail(GP_ERR_CONFIG, e.what());
    } catch (const gradprop::DataFormatError& e) {
        return fail(GP_ERR_IO, e.what());
    } catch (const gradprop::NumericsError& e) {
        return fail(GP_ERR_NUMERIC, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(GP_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(GP_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(GP_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(GP_ERR_INTERNAL, "unknown error");
    }
}

// Line-buffered stream that hands text to a C callback.
class CallbackBuf : public std::stringbuf {
public:
    CallbackBuf(gp_log_fn fn, void* user) : fn_(fn), user_(user) {}
    ~CallbackBuf() override { flush_out(); }

    int sync() override {
        flush_out();
        return 0;
    }

private:
    void flush_out() {
        const auto text = str();
        if (!text.empty()) fn_(text.c_str(), user_);
        str("");
    }

    gp_log_fn fn_;
    void* user_;
};

}  // namespace

extern "C" {

const char* gp_version(void) { return "0.1.0"; }

const char* gp_last_error(void) { return g_last_error.c_str(); }

const char* gp_status_string(gp_status status) {
    switch (status) {
        case GP_OK: return "ok";
        case GP_ERR_INVALID_ARGUMENT: return "invalid argument";
        case GP_ERR_CONFIG: return "configuration error";
        case GP_ERR_IO: return "i/o error";
        case GP_ERR_NUMERIC: return "numeric error";
        case GP_ERR_STATE: return "invalid state";
        case GP_ERR_BUFFER_TOO_SMALL: return "buffer too small";
        case GP_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

gp_status gp_config_create(gp_config** out) {
    if (!out) return fail(GP_ERR_INVALID_ARGUMENT, "out is null");
    return guarded([&] {
        *out = new gp_config{};
        return GP_OK;
    });
}

void gp_config_destroy(gp_config* cfg) { delete cfg; }

gp_status gp_config_load_file(gp_config* cfg, const char* path) {
    if (!cfg || !path) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        // Apply to a copy so a bad file leaves the handle untouched.
        auto next = cfg->cfg;
        gradprop::load_config_file(next, path);
        cfg->cfg = std::move(next);
        return GP_OK;
    });
}

gp_status gp_config_set(gp_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        gradprop::apply_setting(cfg->cfg, key, value);
        return GP_OK;
    });
}

gp_status gp_config_get(const gp_config* cfg, const char* key, char* buf, size_t buf_len, size_t* needed) {
    if (!cfg || !key) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const auto value = gradprop::get_setting(cfg->cfg, key);
        if (needed) *needed = value.size() + 1;
        if (!buf || buf_len < value.size() + 1)
            return fail(GP_ERR_BUFFER_TOO_SMALL, "value of " + std::string(key) + " needs " +
                                                     std::to_string(value.size() + 1) + " bytes");
        std::memcpy(buf, value.c_str(), value.size() + 1);
        return GP_OK;
    });
}

gp_status gp_run_command(const gp_config* cfg, const char* command, gp_log_fn log, void* user, int* exit_code) {
    if (!cfg || !command || !exit_code) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        if (log) {
            CallbackBuf buf(log, user);
            std::ostream os(&buf);
            *exit_code = gradprop::run_command(command, cfg->cfg, os);
            os.flush();
        } else {
            *exit_code = gradprop::run_command(command, cfg->cfg, std::cout);
            std::cout.flush();
        }
        return GP_OK;
    });
}

gp_status gp_relu_moments(double a, gp_moment_mode mode, double* e_y, double* e_y2) {
    if (!e_y || !e_y2) return fail(GP_ERR_INVALID_ARGUMENT, "null output");
    if (mode != GP_MODE_PAPER && mode != GP_MODE_ORACLE) return fail(GP_ERR_INVALID_ARGUMENT, "unknown moment mode");
    return guarded([&] {
        const auto m = gradprop::relu_moments(
            a, mode == GP_MODE_PAPER ? gradprop::MomentMode::PaperFormula : gradprop::MomentMode::Oracle);
        *e_y = m.e_y;
        *e_y2 = m.e_y2;
        return GP_OK;
    });
}

gp_status gp_kantorovich_bound(double c, double d, double* out) {
    if (!out) return fail(GP_ERR_INVALID_ARGUMENT, "null output");
    return guarded([&] {
        *out = gradprop::kantorovich_bound(c, d);
        return GP_OK;
    });
}

gp_status gp_model_create(const gp_config* cfg, size_t input_dim, size_t num_classes, gp_model** out) {
    if (!cfg || !out) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const auto spec = cfg->cfg.net_spec(input_dim, num_classes);
        *out = new gp_model{gradprop::build_model(cfg->cfg, spec), std::nullopt};
        return GP_OK;
    });
}

void gp_model_destroy(gp_model* model) { delete model; }

gp_status gp_model_num_blocks(const gp_model* model, size_t* out) {
    if (!model || !out) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    *out = model->model.blocks.size();
    return GP_OK;
}

gp_status gp_model_num_classes(const gp_model* model, size_t* out) {
    if (!model || !out) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    *out = model->model.spec.num_classes;
    return GP_OK;
}

gp_status gp_model_forward(gp_model* model, const double* inputs, size_t rows, size_t cols, double* logits) {
    if (!model || !inputs || !logits) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    if (rows < 2) return fail(GP_ERR_INVALID_ARGUMENT, "batch needs at least two rows");
    if (cols != model->model.spec.input_dim)
        return fail(GP_ERR_INVALID_ARGUMENT, "input has " + std::to_string(cols) + " columns, model expects " +
                                                 std::to_string(model->model.spec.input_dim));
    return guarded([&] {
        gradprop::Batch x(rows, cols);
        std::memcpy(x.values().data(), inputs, rows * cols * sizeof(double));
        model->last_forward = gradprop::network_forward(model->model, x);
        const auto& z = model->last_forward->logits.values();
        std::memcpy(logits, z.data(), z.size() * sizeof(double));
        return GP_OK;
    });
}

gp_status gp_model_backward(gp_model* model, const int* labels, size_t rows, double lr, double* loss,
                            double* block_grad_variance) {
    if (!model || !labels || !loss || !block_grad_variance) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    if (!model->last_forward) return fail(GP_ERR_STATE, "backward called without a preceding forward pass");
    if (rows != model->last_forward->logits.rows())
        return fail(GP_ERR_INVALID_ARGUMENT, "label count does not match the last forward batch");
    if (!(lr >= 0.0)) return fail(GP_ERR_INVALID_ARGUMENT, "learning rate must be non-negative");
    return guarded([&] {
        const auto fwd = std::move(*model->last_forward);
        model->last_forward.reset();
        const std::vector<int> y(labels, labels + rows);
        const auto xent = gradprop::softmax_xent(fwd.logits, y);
        *loss = xent.loss;
        if (!xent.finite) return fail(GP_ERR_NUMERIC, "non-finite logits");
        const auto tape = gradprop::network_backward(model->model, fwd, xent.dlogits);
        const auto rows_out = gradprop::probe_boundaries(0, model->model, tape);
        for (std::size_t i = 0; i < rows_out.size(); ++i) block_grad_variance[i] = rows_out[i].mean_grad_variance;
        if (lr > 0.0) gradprop::sgd_step(model->model, tape.params, lr);
        return GP_OK;
    });
}

gp_status gp_model_save(const gp_model* model, const char* path) {
    if (!model || !path) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        gradprop::save_checkpoint(model->model, path);
        return GP_OK;
    });
}

gp_status gp_model_load(const char* path, gp_model** out) {
    if (!path || !out) return fail(GP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        *out = new gp_model{gradprop::load_checkpoint(path), std::nullopt};
        return GP_OK;
    });
}

}  // extern "C"
