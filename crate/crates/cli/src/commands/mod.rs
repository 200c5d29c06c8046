pub mod bench;
pub mod contrast;
pub mod deblur;
pub mod reconstruct;
pub mod stream_sim;
pub mod synth;
