//! Detection of generated video from appearance (RGB frames) and second-order
//! motion (optical-flow residuals).

pub mod dataset;
pub mod flow;
pub mod image;
pub mod residual;
pub mod model;
pub mod pipeline;
pub mod training;
pub mod evaluation;
