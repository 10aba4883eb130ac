/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_binarize: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const demo_conf_thresholds: () => [number, number];
export const demo_height: (a: number) => number;
export const demo_iou_thresholds: () => [number, number];
export const demo_new: (a: number, b: number, c: number, d: bigint) => number;
export const demo_page_count: (a: number) => number;
export const demo_page_rgba: (a: number, b: number) => [number, number];
export const demo_sweep_grid: (a: number, b: number, c: bigint) => [number, number];
export const demo_synthesize: (a: number, b: bigint, c: number) => [number, number, number, number];
export const demo_synthetic_angle: (a: number) => number;
export const demo_synthetic_region_count: (a: number) => number;
export const demo_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
