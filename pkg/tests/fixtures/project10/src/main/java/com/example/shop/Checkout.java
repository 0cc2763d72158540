package com.example.shop;

class Checkout {
    private final Inventory inventory = new Inventory();

    double checkout(String label) {
        PriceCalculator calc = new PriceCalculator(0.2);
        Cart cart = new Cart(calc);
        String item = TextUtils.capitalize(label);
        cart.addItem(item, 2);
        double net = cart.total(12.5);
        return calc.applyTax(net, "EU");
    }

    int fill() {
        return inventory.restock("A-1", 5);
    }
}
