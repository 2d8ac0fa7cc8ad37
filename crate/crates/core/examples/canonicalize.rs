//! Structural hashing and canonical ordering: the same network declared in
//! two different orders, with different node ids, exports identically.
//!
//!     cargo run --example canonicalize

use archaudit::aptm::{build_aptm, export_aptm_json, layer_sequence};
use archaudit::graph::{GraphDoc, LayerNode};

fn residual_block(ids: [&str; 5], reversed: bool) -> GraphDoc {
    let [inp, a, b, c, add] = ids;
    let mut nodes = vec![
        LayerNode::new(inp, "Conv2d").with_param("kernel_size", "(3, 3)"),
        LayerNode::new(a, "BatchNorm2d").with_param("num_features", "64"),
        LayerNode::new(b, "ReLU"),
        LayerNode::new(c, "Conv2d").with_param("kernel_size", "(1, 1)"),
        LayerNode::new(add, "Add"),
    ];
    let mut edges = vec![(inp, a), (a, b), (b, add), (inp, c), (c, add), (add, inp)];
    if reversed {
        nodes.reverse();
        edges.reverse();
    }
    GraphDoc {
        nodes,
        edges: edges.into_iter().map(|(x, y)| (x.to_string(), y.to_string())).collect(),
        inputs: vec![inp.to_string()],
        outputs: vec![add.to_string()],
        ..Default::default()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // The (add -> input) edge closes a cycle; it is removed as a back edge.
    let first = build_aptm(&residual_block(["stem", "bn", "act", "proj", "merge"], false))?;
    let second = build_aptm(&residual_block(["a", "b", "c", "d", "e"], true))?;

    for layer in &first.layers {
        println!("{:<6} {:<40} {}", layer.id, layer.canonical(), layer.hash);
    }
    println!("hash order:     {:?}", first.hash_order);
    println!("sequence order: {:?}", first.sequence_order);
    println!("tokens:         {}", layer_sequence(&first).join(" "));

    let (x, y) = (export_aptm_json(&first), export_aptm_json(&second));
    println!("exports identical: {}", x == y);
    print!("{x}");
    Ok(())
}
