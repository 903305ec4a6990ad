// scratch probe for grad_check margins
use faultface::nn::{grad_check, Activation, LayerSpec, NetworkSpec};

fn main() {
    let act = |a| LayerSpec::Act(a);
    let nets: Vec<(&str, NetworkSpec)> = vec![
        ("conv_s1", NetworkSpec::new(vec![2, 6, 6], vec![LayerSpec::Conv { in_ch: 2, out_ch: 3, stride: 1 }]).unwrap()),
        ("conv_s2", NetworkSpec::new(vec![2, 7, 7], vec![LayerSpec::Conv { in_ch: 2, out_ch: 3, stride: 2 }]).unwrap()),
        ("tconv", NetworkSpec::new(vec![2, 4, 4], vec![LayerSpec::TConv { in_ch: 2, out_ch: 3 }]).unwrap()),
        ("dense", NetworkSpec::new(vec![6], vec![LayerSpec::Dense { input: 6, output: 5 }]).unwrap()),
        ("bn_spatial", NetworkSpec::new(vec![3, 5, 5], vec![LayerSpec::BatchNorm { ch: 3 }]).unwrap()),
        ("bn_features", NetworkSpec::new(vec![4], vec![LayerSpec::BatchNorm { ch: 4 }]).unwrap()),
        ("relu", NetworkSpec::new(vec![8], vec![act(Activation::Relu)]).unwrap()),
        ("leaky", NetworkSpec::new(vec![8], vec![act(Activation::LeakyRelu(0.2))]).unwrap()),
        ("tanh", NetworkSpec::new(vec![8], vec![act(Activation::Tanh)]).unwrap()),
        ("sigmoid", NetworkSpec::new(vec![8], vec![act(Activation::Sigmoid)]).unwrap()),
        ("maxpool", NetworkSpec::new(vec![2, 4, 4], vec![LayerSpec::MaxPool]).unwrap()),
        ("flatten", NetworkSpec::new(vec![2, 3, 3], vec![LayerSpec::Flatten]).unwrap()),
        ("reshape", NetworkSpec::new(vec![2, 6], vec![LayerSpec::Reshape { shape: vec![3, 4] }]).unwrap()),
    ];
    for (name, net) in &nets {
        for seed in 0..3u64 {
            match grad_check(net, seed) {
                Ok(r) => println!("{} seed {}: max {:.3e}", name, seed, r.max_rel_err),
                Err(e) => println!("{} seed {}: ERROR {}", name, seed, e),
            }
        }
    }
}
