#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sp4d/appearance.hpp"
#include "sp4d/checkpoint.hpp"
#include "sp4d/dataset.hpp"
#include "sp4d/losses.hpp"
#include "sp4d/metrics.hpp"
#include "sp4d/renderer.hpp"
#include "sp4d/rotor.hpp"
#include "sp4d/trainer.hpp"

namespace py = pybind11;
using namespace sp4d;

namespace {

py::array_t<double> image_to_array(const ImageF& img) {
    if (img.channels == 1) {
        py::array_t<double> out({img.height, img.width});
        std::copy(img.data.begin(), img.data.end(), out.mutable_data());
        return out;
    }
    py::array_t<double> out({img.height, img.width, img.channels});
    std::copy(img.data.begin(), img.data.end(), out.mutable_data());
    return out;
}

ImageF array_to_image(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() == 2) {
        ImageF img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)), 1);
        std::copy(arr.data(), arr.data() + arr.size(), img.data.begin());
        return img;
    }
    if (arr.ndim() != 3) throw std::invalid_argument("expected a HxW or HxWxC array");
    ImageF img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)),
               static_cast<int>(arr.shape(2)));
    std::copy(arr.data(), arr.data() + arr.size(), img.data.begin());
    return img;
}

Vec3 to_vec3(py::sequence s) {
    return {py::cast<double>(s[0]), py::cast<double>(s[1]), py::cast<double>(s[2])};
}

Quat to_quat(py::sequence s) {
    return {py::cast<double>(s[0]), py::cast<double>(s[1]), py::cast<double>(s[2]),
            py::cast<double>(s[3])};
}

py::dict buffers_to_dict(const RenderBuffers& buf) {
    py::dict out;
    out["color"] = image_to_array(buf.color);
    out["depth"] = image_to_array(buf.depth);
    out["normal"] = image_to_array(buf.normal);
    out["alpha"] = image_to_array(buf.alpha);
    return out;
}

TrainConfig config_from_kwargs(const py::dict& kw) {
    TrainConfig cfg;
    for (auto item : kw) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "iterations") cfg.iterations = py::cast<int>(item.second);
        else if (key == "base_lr") cfg.base_lr = py::cast<double>(item.second);
        else if (key == "seed") cfg.seed = py::cast<uint64_t>(item.second);
        else if (key == "threads") cfg.threads = py::cast<int>(item.second);
        else if (key == "eval_interval") cfg.eval_interval = py::cast<int>(item.second);
        else if (key == "densify_interval") cfg.densify_interval = py::cast<int>(item.second);
        else if (key == "init_count") cfg.init_count = py::cast<int>(item.second);
        else if (key == "lr_sh") cfg.lr_sh = py::cast<double>(item.second);
        else if (key == "lr_opacity") cfg.lr_opacity = py::cast<double>(item.second);
        else if (key == "lr_scales") cfg.lr_scales = py::cast<double>(item.second);
        else if (key == "sh_unlock_interval") cfg.sh_unlock_interval = py::cast<int>(item.second);
        else throw std::invalid_argument("unknown train option: " + key);
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_sp4d, m) {
    m.doc() = "4D Gaussian splatting: time-conditioned rendering and optimization";

    py::class_<GaussianCloud>(m, "Cloud")
        .def("__len__", [](const GaussianCloud& c) { return c.size(); })
        .def_property_readonly("sh_degree",
                               [](const GaussianCloud& c) { return c.appearance.sh_degree; })
        .def_property_readonly(
            "temporal_bands",
            [](const GaussianCloud& c) { return c.appearance.temporal_bands; })
        .def("positions", [](const GaussianCloud& c) {
            py::array_t<double> out({static_cast<py::ssize_t>(c.size()), py::ssize_t{4}});
            double* p = out.mutable_data();
            for (const Gaussian4D& g : c.gaussians)
                for (int i = 0; i < 4; ++i) *p++ = g.mu[i];
            return out;
        });

    py::class_<SceneDataset>(m, "Dataset")
        .def("__len__", [](const SceneDataset& d) { return d.frames.size(); })
        .def_property_readonly("extent", &SceneDataset::extent)
        .def("frame", [](const SceneDataset& d, size_t i) {
            const Frame& f = d.frames.at(i);
            py::dict out;
            FrameTargets t = targets_from_frame(f);
            out["rgb"] = image_to_array(t.rgb);
            out["depth"] = t.depth.empty() ? py::object(py::none()) : py::object(image_to_array(t.depth));
            out["time"] = f.camera.time;
            return out;
        });

    m.def("make_synthetic",
          [](int gaussians, const std::string& motion, int width, int height, int frames,
             uint64_t seed) {
              SyntheticSpec spec{gaussians, motion, width, height, frames, seed};
              SyntheticScene scene = make_synthetic(spec);
              return py::make_tuple(std::move(scene.dataset), std::move(scene.cloud));
          },
          py::arg("gaussians") = 60, py::arg("motion") = "oscillating", py::arg("width") = 48,
          py::arg("height") = 48, py::arg("frames") = 8, py::arg("seed") = 1);

    m.def("render_frame",
          [](const GaussianCloud& cloud, const SceneDataset& ds, size_t frame, int threads) {
              RenderOptions opts;
              opts.threads = threads;
              return buffers_to_dict(render(cloud, ds.frames.at(frame).camera, opts));
          },
          py::arg("cloud"), py::arg("dataset"), py::arg("frame"), py::arg("threads") = 1);

    m.def("save_checkpoint",
          [](const GaussianCloud& c, const std::string& path) { save_checkpoint(c, path); });
    m.def("load_checkpoint", [](const std::string& path) { return load_checkpoint(path); });
    m.def("load_dataset",
          [](const std::string& path, const std::string& split, int ratio) {
              Split s = split == "train" ? Split::kTrain
                                         : (split == "all" ? Split::kAll : Split::kVal);
              return load_dataset(path, s, ratio);
          },
          py::arg("path"), py::arg("split") = "all", py::arg("split_ratio") = 7);
    m.def("write_dataset",
          [](const SceneDataset& d, const std::string& dir) { write_dataset(d, dir); });

    m.def("psnr", [](py::array_t<double> a, py::array_t<double> b) {
        return psnr(array_to_image(a), array_to_image(b));
    });
    m.def("ssim", [](py::array_t<double> a, py::array_t<double> b) {
        return ssim(array_to_image(a), array_to_image(b));
    });

    m.def("eval_sh", [](int l, int mm, py::sequence dir) {
        return eval_sh(l, mm, to_vec3(dir).normalized());
    });
    m.def("rotor_to_matrix", [](py::sequence ql, py::sequence qr) {
        Mat4 r = rotor_to_matrix({to_quat(ql), to_quat(qr)});
        py::array_t<double> out({4, 4});
        std::copy(r.m.begin(), r.m.end(), out.mutable_data());
        return out;
    });
    m.def("build_cov4", [](py::sequence ql, py::sequence qr, py::sequence log_s) {
        Scales4 s;
        for (int i = 0; i < 4; ++i) s.log_s[i] = py::cast<double>(log_s[i]);
        Mat4 c = build_cov4({to_quat(ql), to_quat(qr)}, s).to_mat();
        py::array_t<double> out({4, 4});
        std::copy(c.m.begin(), c.m.end(), out.mutable_data());
        return out;
    });

    m.def("train",
          [](const SceneDataset& train_set, const SceneDataset& val_set, const py::dict& kw) {
              TrainConfig cfg = config_from_kwargs(kw);
              TrainResult r = train(train_set, val_set, cfg, AppearanceConfig{}, LossWeights{});
              py::list rows;
              for (const MetricsRow& row : r.log) {
                  py::dict d;
                  d["iteration"] = row.iteration;
                  d["total"] = row.loss.total;
                  d["gaussians"] = row.gaussian_count;
                  if (row.has_eval) {
                      d["psnr"] = row.psnr;
                      d["ssim"] = row.ssim;
                  }
                  rows.append(d);
              }
              return py::make_tuple(std::move(r.cloud), rows);
          },
          py::arg("train_set"), py::arg("val_set"), py::arg("options") = py::dict());

    m.def("evaluate", [](const GaussianCloud& cloud, const SceneDataset& ds, int threads) {
        EvalResult ev = evaluate(cloud, ds, threads);
        py::dict out;
        out["psnr"] = ev.psnr;
        out["ssim"] = ev.ssim;
        return out;
    }, py::arg("cloud"), py::arg("dataset"), py::arg("threads") = 1);
}
