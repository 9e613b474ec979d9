"""Smoke test for the routegen_py bindings.

Usage:
    python3 python/smoke_test.py [checkpoint_dir map.json]

Without arguments it exercises maps, commands, and BLEU. With a
checkpoint directory and a map file it also runs end-to-end generation.
"""

import json
import sys

import routegen_py as rg

MAP_DOC = {
    "nodes": [[0, 0], [1, 0], [2, 0], [2, 1]],
    "edges": [
        {"a": [0, 0], "b": [1, 0], "floor_color": "blue", "floor_texture": "carpet"},
        {"a": [1, 0], "b": [2, 0], "floor_color": "blue", "floor_texture": "carpet"},
        {"a": [2, 0], "b": [2, 1], "floor_color": "red", "floor_texture": "wood"},
    ],
    "objects": [{"node": [2, 0], "kind": "lamp"}],
}


def main():
    m = rg.WorldMap.loads(json.dumps(MAP_DOC))
    assert m.node_count == 4 and m.edge_count == 3, repr(m)
    assert m.objects() == [((2, 0), "lamp")]
    reparsed = rg.WorldMap.loads(m.to_json())
    assert reparsed.node_count == m.node_count

    poses = m.shortest_path("0,0,E", "2,1,N")
    assert poses[0] == (0, 0, "E") and poses[-1] == (2, 1, "N"), poses
    print(f"shortest path: {len(poses)} poses, {poses}")

    a = rg.Command.parse("Travel(distance=3); Turn(direction=Left)")
    assert a.action_count == 2 and a.eta() == 2
    assert rg.Command.parse(a.serialize()).serialize() == a.serialize()
    print(f"command: {a.serialize()} tokens={a.tokens()}")

    b = rg.Command.parse("Travel(distance=3); Turn(direction=Right)")
    d_ab = rg.token_distance(a, b)
    assert 0.0 < d_ab < 1.0 and rg.token_distance(a, a) == 0.0
    print(f"token distance: {d_ab:.4f}")

    assert rg.bleu_sentence("the cat sat", "the cat sat") == 100.0
    score = rg.bleu_sentence("the cat sat", "the cat sat on the mat")
    assert 0.0 < score < 100.0
    corpus = rg.bleu_corpus([("the cat sat", "the cat sat"), ("a b c d", "a b c d")])
    assert corpus == 100.0
    print(f"bleu: partial={score:.2f} corpus={corpus:.2f}")

    if len(sys.argv) == 3:
        gen = rg.Generator.load(sys.argv[1])
        world = rg.WorldMap.load(sys.argv[2])
        out = gen.generate(world, "0,0,E", "2,1,N")
        assert out["instruction"] and out["segments"]
        print(f"generated: {out['instruction']}")

    print("smoke test passed")


if __name__ == "__main__":
    main()
