//! Convert annotated bioimaging datasets into an AI-ready repository layout
//! (16-bit images, per-split CSV manifests, Croissant JSON-LD, dataset card)
//! and publish it to a HuggingFace-compatible hub.

pub mod retry;
pub mod source;
pub mod image;
pub mod metadata;
pub mod croissant;
pub mod card;
pub mod hub;
pub mod config;
pub mod pipeline;
