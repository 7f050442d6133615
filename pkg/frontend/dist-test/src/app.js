/**
 * DOM wiring for the explorer: pick a sample and target class, choose or
 * auto-select reference classes, drag the comparison-strength slider, and
 * watch the overlay, logits, and relative-drop readout update live.
 *
 * All saliency comes verbatim from the service; this file only decodes the
 * payload and re-blends it at the chosen opacity.
 */
import { ApiClient } from "./api.js";
import { base64ToBuffer, decodeFct } from "./fct.js";
import { renderOverlay } from "./overlay.js";
import { AGGREGATIONS, GAMMA_SLIDER_MAX, METHODS, canReverse, defaultState, toExplainRequest, } from "./state.js";
const api = new ApiClient("");
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
let state = defaultState(0);
let classes = [];
let lastPayload = null;
let baseImage = null;
async function boot() {
    classes = await api.classes();
    state = defaultState(classes.length);
    const sampleSelect = el("sample");
    const samples = await api.samples();
    for (const s of samples) {
        const opt = document.createElement("option");
        opt.value = s.sample_id;
        opt.textContent = `${s.sample_id} (${s.class_name}, ${s.split})`;
        sampleSelect.appendChild(opt);
    }
    const targetSelect = el("target");
    targetSelect.appendChild(new Option("predicted (argmax)", "auto"));
    classes.forEach((name, i) => targetSelect.appendChild(new Option(name, String(i))));
    const refsSelect = el("manual-refs");
    classes.forEach((name, i) => refsSelect.appendChild(new Option(name, String(i))));
    const methodSelect = el("method");
    METHODS.forEach((m) => methodSelect.appendChild(new Option(m, m)));
    const aggSelect = el("aggregation");
    AGGREGATIONS.forEach((a) => aggSelect.appendChild(new Option(a, a)));
    sampleSelect.addEventListener("change", () => {
        state.sampleId = sampleSelect.value || null;
        void loadBaseImage().then(refresh);
    });
    targetSelect.addEventListener("change", () => {
        state.targetClass = targetSelect.value === "auto" ? null : Number(targetSelect.value);
        void refresh();
    });
    el("ref-mode").addEventListener("change", (ev) => {
        state.referenceMode = ev.target.value;
        el("auto-row").hidden = state.referenceMode !== "auto";
        el("manual-row").hidden = state.referenceMode !== "manual";
        void refresh();
    });
    el("auto-count").addEventListener("input", (ev) => {
        state.autoCount = Number(ev.target.value);
        el("auto-count-value").textContent = String(state.autoCount);
        void refresh();
    });
    refsSelect.addEventListener("change", () => {
        state.manualRefs = Array.from(refsSelect.selectedOptions).map((o) => Number(o.value));
        void refresh();
    });
    const gamma = el("gamma");
    gamma.max = String(GAMMA_SLIDER_MAX);
    gamma.addEventListener("input", () => {
        state.gamma = Number(gamma.value);
        el("gamma-value").textContent = state.gamma.toFixed(2);
        void refresh();
    });
    methodSelect.addEventListener("change", () => {
        state.method = methodSelect.value;
        void refresh();
    });
    aggSelect.addEventListener("change", () => {
        state.aggregation = aggSelect.value;
        void refresh();
    });
    el("reverse").addEventListener("change", (ev) => {
        state.reverse = ev.target.checked;
        void refresh();
    });
    const opacity = el("opacity");
    opacity.addEventListener("input", () => {
        state.overlayOpacity = Number(opacity.value);
        drawOverlay(); // re-blend locally; no request needed
    });
    if (samples.length > 0) {
        sampleSelect.value = samples[0].sample_id;
        state.sampleId = samples[0].sample_id;
        await loadBaseImage();
        await refresh();
    }
}
async function loadBaseImage() {
    if (!state.sampleId) {
        baseImage = null;
        return;
    }
    const img = new Image();
    img.src = api.imageUrl(state.sampleId);
    await img.decode();
    const canvas = document.createElement("canvas");
    canvas.width = img.naturalWidth;
    canvas.height = img.naturalHeight;
    const ctx = canvas.getContext("2d");
    ctx.drawImage(img, 0, 0);
    const data = ctx.getImageData(0, 0, canvas.width, canvas.height);
    baseImage = { data: data.data, width: canvas.width, height: canvas.height };
}
async function refresh() {
    el("reverse").disabled = !canReverse(state);
    const request = toExplainRequest(state);
    if (!request)
        return;
    const banner = el("error-banner");
    const result = await api.explain(request);
    if (result.kind === "stale")
        return; // superseded by a newer slider value
    if (result.kind === "error") {
        banner.hidden = false;
        banner.textContent = `request failed: ${result.detail}`;
        return;
    }
    banner.hidden = true;
    lastPayload = result.payload;
    drawOverlay();
    drawLogits(result.payload);
    el("refs-used").textContent =
        result.payload.references_used.map((d) => classes[d] ?? String(d)).join(", ") || "(baseline)";
    void updateRelativeDrop(request);
}
async function updateRelativeDrop(request) {
    const readout = el("rd-value");
    const result = await api.relativeDrop({ ...request, fraction: 0.05 });
    if (result.kind === "ok") {
        const p = result.payload;
        readout.textContent = `${p.rd.toFixed(4)} vs ${classes[p.reference_class] ?? p.reference_class} @5%`;
    }
    else if (result.kind === "error") {
        readout.textContent = `unavailable (${result.detail})`;
    }
}
function drawOverlay() {
    if (!lastPayload || !baseImage)
        return;
    const tensor = decodeFct(base64ToBuffer(lastPayload.saliency));
    if (tensor.dtype !== "f32" || tensor.shape.length !== 2)
        return;
    const [h, w] = tensor.shape;
    const blended = renderOverlay(baseImage.data, baseImage.width, baseImage.height, tensor.data, w, h, state.overlayOpacity);
    const canvas = el("view");
    canvas.width = baseImage.width;
    canvas.height = baseImage.height;
    const ctx = canvas.getContext("2d");
    const pixels = new Uint8ClampedArray(blended.length);
    pixels.set(blended);
    ctx.putImageData(new ImageData(pixels, baseImage.width, baseImage.height), 0, 0);
}
function drawLogits(payload) {
    const list = el("logits");
    list.textContent = "";
    const ranked = payload.logits
        .map((value, cls) => ({ value, cls }))
        .sort((a, b) => b.value - a.value)
        .slice(0, 5);
    const peak = Math.max(...ranked.map((r) => Math.abs(r.value)), 1e-9);
    for (const { value, cls } of ranked) {
        const row = document.createElement("div");
        row.className = "logit-row";
        const bar = document.createElement("span");
        bar.className = "logit-bar";
        bar.style.width = `${Math.round((Math.abs(value) / peak) * 160)}px`;
        const label = document.createElement("span");
        label.textContent = ` ${classes[cls] ?? cls}: ${value.toFixed(3)}`;
        row.append(bar, label);
        list.appendChild(row);
    }
}
void boot();
