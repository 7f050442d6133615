import assert from "node:assert/strict";
import { test } from "node:test";
import { COLORMAP, colorFor } from "../src/colormap.js";
import { bilinearResize, renderOverlay } from "../src/overlay.js";
function rgbaImage(width, height, fill) {
    const buf = new Uint8ClampedArray(width * height * 4);
    for (let p = 0; p < width * height; p++) {
        buf[4 * p] = fill[0];
        buf[4 * p + 1] = fill[1];
        buf[4 * p + 2] = fill[2];
        buf[4 * p + 3] = 255;
    }
    return buf;
}
test("colormap anchors match the shipped table", () => {
    assert.equal(COLORMAP.length, 768);
    assert.deepEqual([...COLORMAP.slice(0, 3)], [13, 8, 135]);
    assert.deepEqual([...COLORMAP.slice(3 * 128, 3 * 128 + 3)], [204, 71, 120]);
    assert.deepEqual([...COLORMAP.slice(3 * 255)], [240, 249, 33]);
});
test("opacity zero returns the original image", () => {
    const img = rgbaImage(3, 2, [70, 80, 90]);
    const sal = new Float32Array([0, 0.2, 0.5, 0.7, 0.9, 1]);
    const out = renderOverlay(img, 3, 2, sal, 3, 2, 0);
    assert.deepEqual([...out], [...img]);
});
test("zero saliency returns the original image at any opacity", () => {
    const img = rgbaImage(2, 2, [10, 200, 33]);
    const sal = new Float32Array(4);
    for (const opacity of [0.25, 0.5, 1]) {
        const out = renderOverlay(img, 2, 2, sal, 2, 2, opacity);
        assert.deepEqual([...out], [...img]);
    }
});
test("saturated map at opacity one is pure colormap", () => {
    const img = rgbaImage(2, 1, [0, 0, 0]);
    const sal = new Float32Array([1, 1]);
    const out = renderOverlay(img, 2, 1, sal, 2, 1, 1);
    const [r, g, b] = colorFor(1);
    assert.deepEqual([...out], [r, g, b, 255, r, g, b, 255]);
});
test("blend arithmetic matches the documented formula", () => {
    const img = rgbaImage(1, 1, [100, 150, 200]);
    const s = 0.4;
    const opacity = 0.5;
    const out = renderOverlay(img, 1, 1, new Float32Array([s]), 1, 1, opacity);
    const [r, g, b] = colorFor(s);
    const alpha = opacity * s;
    assert.equal(out[0], Math.floor(100 * (1 - alpha) + r * alpha + 0.5));
    assert.equal(out[1], Math.floor(150 * (1 - alpha) + g * alpha + 0.5));
    assert.equal(out[2], Math.floor(200 * (1 - alpha) + b * alpha + 0.5));
});
test("size mismatch resizes the saliency bilinearly", () => {
    const img = rgbaImage(4, 1, [0, 0, 0]);
    // 1x2 grid [0, 1] -> 1x4 should be [0, 0.25, 0.75, 1] (half-pixel centers)
    const out = renderOverlay(img, 4, 1, new Float32Array([0, 1]), 2, 1, 1);
    const expected = [0, 0.25, 0.75, 1].map((s) => {
        const [r] = colorFor(s);
        return Math.floor(0 * (1 - s) + r * s + 0.5);
    });
    assert.deepEqual([out[0], out[4], out[8], out[12]], expected);
});
test("bilinear resize of a constant map is constant", () => {
    const out = bilinearResize(new Float32Array([3.5, 3.5, 3.5, 3.5]), 2, 2, 7, 5);
    for (const v of out)
        assert.ok(Math.abs(v - 3.5) < 1e-6);
});
test("bilinear resize hand values", () => {
    const out = bilinearResize(new Float32Array([0, 1]), 2, 1, 4, 1);
    const expected = [0, 0.25, 0.75, 1];
    out.forEach((v, i) => assert.ok(Math.abs(v - expected[i]) < 1e-6));
});
test("invalid inputs throw", () => {
    const img = rgbaImage(2, 2, [0, 0, 0]);
    assert.throws(() => renderOverlay(img, 2, 2, new Float32Array(3), 2, 2, 0.5));
    assert.throws(() => renderOverlay(img, 2, 2, new Float32Array(4), 2, 2, 1.5));
});
