//! Selection and backpropagation on a hand-built tree, no model involved.
//!
//! ```text
//! cargo run --example ucb_selection
//! ```

use reasoning_mcts::tree::{backpropagate, select_leaf, ucb1, NodeId, SearchConfig, SearchTree};

fn main() {
    let config = SearchConfig::default();
    println!("ucb1(r=0.6, c=0.5, N=4, n=1) = {:.6}", ucb1(0.6, 0.5, 4, 1));
    println!("ucb1 with c=0 is greedy:       {}", ucb1(0.9, 0.0, 100, 3));
    println!("unvisited child:               {}", ucb1(0.2, 0.5, 7, 0));

    let mut tree = SearchTree::new("Count the vowels in a string.");
    let a = tree.add_child(NodeId::ROOT, "Lowercase the string first.").unwrap();
    let b = tree.add_child(NodeId::ROOT, "Walk the characters once.").unwrap();
    tree.nodes[0].visits = 3;
    tree.nodes[a.0].reward = 0.8;
    tree.nodes[a.0].visits = 2;
    tree.nodes[b.0].reward = 0.5;
    tree.nodes[b.0].visits = 1;
    for id in [a, b] {
        let n = tree.node(id).unwrap();
        println!("{id}: reward {:.2} visits {} ucb {:.4}", n.reward, n.visits, ucb1(n.reward, 0.5, 3, n.visits));
    }
    let leaf = select_leaf(&mut tree, &config).unwrap();
    println!("selected {leaf}; root visits now {}", tree.root_node().visits);

    let c = tree.add_child(leaf, "Count characters in the set aeiou.").unwrap();
    tree.nodes[c.0].reward = 1.0;
    for up in backpropagate(&mut tree, leaf, config.alpha).unwrap() {
        println!("backprop {}: {:.4} -> {:.4} (children mean {:.4})", up.node, up.old, up.new, up.delta);
    }
    tree.validate().unwrap();
}
