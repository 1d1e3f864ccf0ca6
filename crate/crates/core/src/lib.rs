//! Fabric drape toolkit: quasi-static cloth simulation of the hanging and
//! stretch capture scenes, depth and shaded rendering, image augmentation,
//! synthetic dataset generation, an image-based drape similarity metric and
//! the ordinal-embedding tools used to evaluate it.

pub mod augment;
pub mod dataset;
pub mod embed;
pub mod image;
pub mod material;
pub mod metric;
pub mod render;
pub mod seed;
pub mod sim;
