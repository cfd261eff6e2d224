//! Build the space-time graph of a skeleton and look at its neighbor
//! classes, its normalization and the Kipf-Welling special case.
//!
//! ```text
//! cargo run --release --example graph_inspect -- [skeleton file] [frames]
//! ```

use std::path::Path;

use stgcn_refine::graph::{conv_decomposed, NeighborClass, StGraph};
use stgcn_refine::skeleton::{default_topology, SkeletonTopology};
use stgcn_refine::tensor::rng::seeded;
use stgcn_refine::Tensor;

fn main() -> stgcn_refine::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let topo = match args.first() {
        Some(p) => SkeletonTopology::load(Path::new(p))?,
        None => default_topology(),
    };
    let frames = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);

    println!("skeleton ({} joints, root {}):", topo.joint_count(), topo.names()[topo.root()]);
    for j in 0..topo.joint_count() {
        let name = |k: Option<usize>| k.map_or("-".to_string(), |k| topo.names()[k].clone());
        println!(
            "  {:>2} {:<12} parent {:<12} mirror {:<12} spine distance {}",
            j,
            topo.names()[j],
            name(topo.parent(j)),
            name(topo.mirror(j)),
            topo.spine_distance(j)?
        );
    }

    let g = StGraph::build(&topo, frames)?;
    print!("\n{}", g.dump(false));

    // neighbors of one node per class, in the center frame
    let j = topo.names().iter().position(|n| n == "l_elbow").unwrap_or(0);
    let t = frames / 2;
    let u = g.node_index(t, j);
    let p = g.node_count();
    println!("\nneighbors of ({t}, {}):", topo.names()[j]);
    for (k, class) in NeighborClass::ALL.iter().enumerate() {
        let row = &g.class_matrix(k).data()[u * p..(u + 1) * p];
        let ns: Vec<String> = (0..p)
            .filter(|&v| row[v] != 0.0)
            .map(|v| format!("({}, {})", v / topo.joint_count(), topo.names()[v % topo.joint_count()]))
            .collect();
        println!("  {:<8} {}", class.name(), ns.join(" "));
    }

    // one shared kernel over the undecomposed graph is plain Kipf-Welling
    let mut rng = seeded(0);
    let x = Tensor::rand_uniform(&mut rng, &[p, 4], -1.0, 1.0);
    let w = Tensor::rand_uniform(&mut rng, &[4, 2], -1.0, 1.0);
    let a = conv_decomposed(&[g.kipf_matrix()], &x, &w.reshape(&[1, 4, 2])?)?.relu()?;
    let b = g.kipf_propagate(&x, &w)?;
    let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("\nsingle-class class_conv vs kipf_propagate: max difference {diff:.1e}");

    // six kernels: every class gets its own weights
    let kernels = Tensor::rand_uniform(&mut rng, &[6, 4, 2], -1.0, 1.0);
    let y = g.class_conv(&x, &kernels)?;
    println!("class_conv output shape {:?}", y.shape());
    Ok(())
}
