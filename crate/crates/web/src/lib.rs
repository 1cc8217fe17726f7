//! Browser front end for the reconstruction pipeline.
//!
//! [`Session`] holds a simulated dataset and runs everything in plain Rust so
//! it can be tested natively; [`Demo`] is its JavaScript face.

use dynmpi::eval::{default_reference_frame, reconstruct_reference};
use dynmpi::io::RunConfig;
use dynmpi::simulator::ffp_trajectory;
use dynmpi::{DynamicDataset, EstimatorMethod, EstimatorSpec, Grid2D, Result, SolveResult, SolverConfig};
use wasm_bindgen::prelude::*;

/// Image plus convergence information of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub image: Vec<f64>,
    /// MSE against the reference truth.
    pub mse: f64,
    /// MSE after every sweep.
    pub trace: Vec<f64>,
}

pub struct Session {
    config: RunConfig,
    dataset: DynamicDataset,
    reference: usize,
}

impl Session {
    /// Simulates `frames` frames on an `n × n` grid. `snr <= 0` disables noise.
    pub fn new(n: usize, frames: usize, snr: f64, seed: u64) -> Result<Self> {
        let mut config = RunConfig::default();
        config.grid.recon = Grid2D::new(n, n, config.grid.recon.fov_width, config.grid.recon.fov_height)?;
        config.partition.n_frames = frames;
        config.noise.snr = (snr > 0.0).then_some(snr);
        config.seeds.noise = seed;
        let dataset = config.simulate()?;
        Ok(Self {
            config,
            dataset,
            reference: default_reference_frame(frames),
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.dataset.grid
    }

    pub fn n_frames(&self) -> usize {
        self.dataset.partition.n_frames()
    }

    pub fn reference_frame(&self) -> usize {
        self.reference
    }

    /// Phantom at the start of `frame`.
    pub fn truth(&self, frame: usize) -> Option<&[f64]> {
        self.dataset.frame_truth(frame)
    }

    /// One acquisition period of the field-free point, `points` samples as
    /// interleaved `x, y` in meters.
    pub fn ffp_path(&self, points: usize) -> Vec<f64> {
        let period = self.config.scanner.frame_duration().unwrap_or(0.0);
        (0..points)
            .flat_map(|i| ffp_trajectory(&self.config.scanner, period * i as f64 / points as f64))
            .collect()
    }

    pub fn levels(&self, method: EstimatorMethod, subsize: usize) -> Result<Vec<f64>> {
        let data = self
            .dataset
            .with_reference_frame(self.reference)?
            .with_subproblems(subsize)?;
        Ok(EstimatorSpec::new(method).base_levels(&data)?.values())
    }

    pub fn kaczmarz(&self, lambda: f64) -> Result<Outcome> {
        let cfg = SolverConfig::reg_kaczmarz(lambda);
        cfg.validate()?;
        self.outcome(reconstruct_reference(&self.dataset, &cfg, None, self.reference, 1)?)
    }

    pub fn resesop(&self, method: EstimatorMethod, scale: f64, subsize: usize) -> Result<Outcome> {
        let data = self
            .dataset
            .with_reference_frame(self.reference)?
            .with_subproblems(subsize)?;
        let levels = EstimatorSpec::new(method).levels(&data, scale, 0)?;
        let cfg = SolverConfig::resesop();
        self.outcome(reconstruct_reference(&self.dataset, &cfg, Some(&levels), self.reference, subsize)?)
    }

    fn outcome(&self, result: SolveResult) -> Result<Outcome> {
        let truth = self.truth(self.reference).expect("simulated data carry truth");
        Ok(Outcome {
            mse: dynmpi::mse(&result.reconstruction, truth)?,
            trace: result.trace.iter().filter_map(|t| t.mse).collect(),
            image: result.reconstruction,
        })
    }
}

fn js(e: dynmpi::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// JavaScript handle on a [`Session`]. Images are row-major `n × n` arrays.
#[wasm_bindgen]
pub struct Demo {
    session: Session,
    last: Option<Outcome>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, frames: usize, snr: f64, seed: u64) -> std::result::Result<Demo, JsError> {
        Ok(Demo {
            session: Session::new(n, frames, snr, seed).map_err(js)?,
            last: None,
        })
    }

    pub fn size(&self) -> usize {
        self.session.grid().nx
    }

    pub fn frames(&self) -> usize {
        self.session.n_frames()
    }

    #[wasm_bindgen(js_name = referenceFrame)]
    pub fn reference_frame(&self) -> usize {
        self.session.reference_frame()
    }

    /// `[xmin, xmax, ymin, ymax]` of the field of view in meters.
    pub fn bounds(&self) -> Vec<f64> {
        self.session.grid().bounds().to_vec()
    }

    pub fn truth(&self, frame: usize) -> Vec<f64> {
        self.session.truth(frame).map(<[f64]>::to_vec).unwrap_or_default()
    }

    #[wasm_bindgen(js_name = ffpPath)]
    pub fn ffp_path(&self, points: usize) -> Vec<f64> {
        self.session.ffp_path(points)
    }

    /// Uncertainty level of every subproblem; `method` is `norm`, `interp`
    /// or `prior-recon`.
    pub fn levels(&self, method: &str, subsize: usize) -> std::result::Result<Vec<f64>, JsError> {
        let method = method.parse().map_err(js)?;
        self.session.levels(method, subsize).map_err(js)
    }

    #[wasm_bindgen(js_name = reconstructKaczmarz)]
    pub fn reconstruct_kaczmarz(&mut self, lambda: f64) -> std::result::Result<Vec<f64>, JsError> {
        let out = self.session.kaczmarz(lambda).map_err(js)?;
        Ok(self.keep(out))
    }

    #[wasm_bindgen(js_name = reconstructResesop)]
    pub fn reconstruct_resesop(&mut self, method: &str, scale: f64, subsize: usize) -> std::result::Result<Vec<f64>, JsError> {
        let method = method.parse().map_err(js)?;
        let out = self.session.resesop(method, scale, subsize).map_err(js)?;
        Ok(self.keep(out))
    }

    /// MSE of the latest reconstruction, NaN before the first one.
    #[wasm_bindgen(js_name = lastMse)]
    pub fn last_mse(&self) -> f64 {
        self.last.as_ref().map_or(f64::NAN, |o| o.mse)
    }

    #[wasm_bindgen(js_name = lastTrace)]
    pub fn last_trace(&self) -> Vec<f64> {
        self.last.as_ref().map(|o| o.trace.clone()).unwrap_or_default()
    }

    fn keep(&mut self, out: Outcome) -> Vec<f64> {
        let image = out.image.clone();
        self.last = Some(out);
        image
    }
}
