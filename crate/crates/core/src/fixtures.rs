//! Reference network for a simplified EV battery pack.
//!
//! Five assembly processes turn 23 leaf products into the finished battery
//! through four intermediate stages:
//!
//! ```text
//! screws1 cooling box                         -> p1 {manipulation, screwing}            -> stage1
//! stage1 bolts1 bms cables mod1..mod8         -> p2 {manipulation, screwing, cables}    -> stage2
//! stage2 bolts2 brace1..brace5                -> p3 {manipulation, screwing}            -> stage3
//! stage3 blanket                              -> p4 {manipulation}                      -> stage4
//! stage4 screws2 cover                        -> p5 {manipulation, screwing}            -> battery
//! ```

use crate::model::nid;
use crate::model::{BiPanModel, ModelParts, ProductKind, ProductNode};

pub const F1_ID: &str = "f1";

/// Builds the reference battery network.
pub fn f1() -> BiPanModel {
    use ProductKind::*;

    let typed = |id: &str, label: &str, kind: ProductKind, type_ref: &str| {
        ProductNode::new(nid(id), label, kind).with_type_ref(type_ref)
    };

    let mut parts = ModelParts::new(F1_ID)
        .skill("manip", "manipulation")
        .skill("screw", "screwing")
        .skill("connect", "connecting-cables")
        // p1
        .product_node(typed("screws1", "Screws", Fastener, "screw"))
        .product("cooling", "Cooling system", SubProduct)
        .product("box", "Battery box", Elementary)
        .product("stage1", "Stage 1", Stage)
        .process("p1", "Insert cooling system into battery box")
        .input("screws1", "p1")
        .input("cooling", "p1")
        .input("box", "p1")
        .output("p1", "stage1")
        .requires("p1", "manip")
        .requires("p1", "screw")
        // p2
        .product_node(typed("bolts1", "Bolts", Fastener, "bolt"))
        .product("bms", "Battery management system", SubProduct)
        .product("cables", "Cables", SubProduct)
        .product("stage2", "Stage 2", Stage)
        .process("p2", "Insert BMS, cables and modules")
        .input("stage1", "p2")
        .input("bolts1", "p2")
        .input("bms", "p2")
        .input("cables", "p2")
        .output("p2", "stage2")
        .requires("p2", "manip")
        .requires("p2", "screw")
        .requires("p2", "connect");
    for i in 1..=8 {
        let id = format!("mod{i}");
        parts = parts
            .product_node(typed(
                &id,
                &format!("Module {i}"),
                SubProduct,
                "battery-module",
            ))
            .input(&id, "p2");
    }
    parts = parts
        // p3
        .product_node(typed("bolts2", "Bolts", Fastener, "bolt"))
        .product("stage3", "Stage 3", Stage)
        .process("p3", "Insert braces")
        .input("stage2", "p3")
        .input("bolts2", "p3")
        .output("p3", "stage3")
        .requires("p3", "manip")
        .requires("p3", "screw");
    for i in 1..=5 {
        let id = format!("brace{i}");
        parts = parts
            .product_node(typed(&id, &format!("Brace {i}"), Elementary, "brace"))
            .input(&id, "p3");
    }
    parts
        // p4
        .product("blanket", "Isolation blanket", Elementary)
        .product("stage4", "Stage 4", Stage)
        .process("p4", "Lay isolation blanket")
        .input("stage3", "p4")
        .input("blanket", "p4")
        .output("p4", "stage4")
        .requires("p4", "manip")
        // p5
        .product_node(typed("screws2", "Screws", Fastener, "screw"))
        .product("cover", "Cover", Elementary)
        .product("battery", "EV battery", Final)
        .process("p5", "Close cover")
        .input("stage4", "p5")
        .input("screws2", "p5")
        .input("cover", "p5")
        .output("p5", "battery")
        .requires("p5", "manip")
        .requires("p5", "screw")
        .build()
        .expect("reference fixture is reference-complete")
}
