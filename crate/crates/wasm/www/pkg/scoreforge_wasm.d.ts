/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Sauvola ink mask of a source page as RGBA, ink black on white.
     * Invalid parameters give an empty vector.
     */
    binarize(page: number, window: number, k: number, r: number): Uint8Array;
    /**
     * Row labels of [`Demo::sweep_grid`].
     */
    static conf_thresholds(): Float64Array;
    height(): number;
    /**
     * Column labels of [`Demo::sweep_grid`].
     */
    static iou_thresholds(): Float64Array;
    constructor(pages: number, width: number, height: number, seed: bigint);
    page_count(): number;
    /**
     * Source page as RGBA with its annotated boxes.
     */
    page_rgba(page: number): Uint8Array;
    /**
     * Macro F1 over the sweep grid for a fake detector with the given
     * jitter: confidence rows, IoU columns, row-major.
     */
    sweep_grid(jitter: number, seed: bigint): Float64Array;
    /**
     * One synthetic page as RGBA with its boxes drawn.
     */
    synthesize(seed: bigint, rotation_range: number): Uint8Array;
    /**
     * Rotation of the last synthetic page in degrees.
     */
    synthetic_angle(): number;
    synthetic_region_count(): number;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_binarize: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly demo_conf_thresholds: () => [number, number];
    readonly demo_height: (a: number) => number;
    readonly demo_iou_thresholds: () => [number, number];
    readonly demo_new: (a: number, b: number, c: number, d: bigint) => number;
    readonly demo_page_count: (a: number) => number;
    readonly demo_page_rgba: (a: number, b: number) => [number, number];
    readonly demo_sweep_grid: (a: number, b: number, c: bigint) => [number, number];
    readonly demo_synthesize: (a: number, b: bigint, c: number) => [number, number, number, number];
    readonly demo_synthetic_angle: (a: number) => number;
    readonly demo_synthetic_region_count: (a: number) => number;
    readonly demo_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
